#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "meqa/errors.hpp"
#include "meqa/geometry.hpp"
#include "meqa/image.hpp"
#include "meqa/memory.hpp"

namespace meqa {

class Scene;

// ---------------------------------------------------------------------------
// Questions

struct Question {
    std::string id;
    std::string scene;
    std::string type = "mc";  // "mc" or "open"
    std::string text;
    std::vector<std::string> options;  // MC only, lettered A, B, ...
    std::string answer;                // MC: gold letter; open: gold sentence
    std::vector<int> entities;         // object ids the answer depends on

    bool is_mc() const { return type == "mc"; }
    // Question text as shown to the model; MC options appended one per line.
    std::string prompt_text() const;
    void validate() const;
};

std::vector<Question> load_questions(const std::string& path);
std::string question_to_json(const Question& q);
Question question_from_json(const std::string& text);

// ---------------------------------------------------------------------------
// Requests

enum class TemplateId { scene_caption, object_caption, confidence, direction, answer_mc, answer_open, judge };

std::string template_name(TemplateId id);
TemplateId parse_template_id(const std::string& name);

// Template text with {Question} substituted.
std::string fill_template(TemplateId id, const std::string& question = "");

// Ground truth attached to an image by the simulator side. Only the scripted
// oracle reads it; a real model sees pixels.
struct ImageMeta {
    std::optional<Pose> pose;
    std::vector<int> visible_objects;
    std::optional<int> object_id;           // set on object crops
    std::map<char, Vec2> candidates;        // letter -> world position on annotated views
};

struct ImageHandle {
    std::string ref;
    RgbImage image;
    ImageMeta meta;
};

struct OracleRequest {
    TemplateId template_id = TemplateId::scene_caption;
    std::string prompt;  // full text: optional context block followed by the filled template
    std::vector<ImageHandle> images;
};

// Context block followed by the filled template.
std::string compose_prompt(TemplateId id, const std::string& question, const std::string& context);

// ---------------------------------------------------------------------------
// Oracles

class OracleError : public Error {
public:
    using Error::Error;
};
class OracleTimeoutError : public OracleError {
public:
    using OracleError::OracleError;
};
class OracleHttpError : public OracleError {
public:
    OracleHttpError(int status, const std::string& what) : OracleError(what), status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};
class OracleImageTooLargeError : public OracleError {
public:
    using OracleError::OracleError;
};

class Oracle {
public:
    virtual ~Oracle() = default;
    // Raw reply text; throws OracleError on transport failure.
    virtual std::string complete(const OracleRequest& request) = 0;
};

// Deterministic oracle driven by scene ground truth and the episode question.
class ScriptedOracle : public Oracle {
public:
    ScriptedOracle(const Scene& scene, Question question);
    std::string complete(const OracleRequest& request) override;

    // "<color> <category> in the <room> at (x.x, y.y)"
    std::string object_description(int object_id) const;
    bool entity_present(int object_id, const std::string& prompt) const;
    // Present in the prompt text or visible in an attached image.
    bool entity_known(int object_id, const OracleRequest& request) const;

private:
    const Scene& scene_;
    Question question_;
};

// ---------------------------------------------------------------------------
// Parsing

struct ParseNotes {
    std::vector<std::string> warnings;
};

SceneCaption parse_scene_caption(const std::string& text, ParseNotes& notes);
ObjectCaption parse_object_caption(const std::string& text, ParseNotes& notes);
// First answer letter among the first n letters, or empty.
std::optional<char> parse_letter(const std::string& text, int n, ParseNotes& notes);

// Confidence letter to value: A 0.0, B 0.25, C 0.5, D 0.75, E 1.0.
double confidence_value(char letter);

// ---------------------------------------------------------------------------
// Calls with fallbacks. None of these throw on oracle failure.

struct SceneCaptionResult {
    SceneCaption caption;
    bool ok = false;
    std::vector<std::string> warnings;
};
SceneCaptionResult describe_scene(Oracle& oracle, const ImageHandle& image);

struct ObjectCaptionResult {
    ObjectCaption caption;
    bool ok = false;
    std::vector<std::string> warnings;
};
ObjectCaptionResult describe_object(Oracle& oracle, const ImageHandle& crop);

struct ConfidenceResult {
    char letter = 'A';
    double value = 0.0;
    std::string raw;
    std::vector<std::string> warnings;
};
ConfidenceResult confidence(Oracle& oracle, const Question& q, const std::string& context, const ImageHandle& image);

struct DirectionResult {
    std::optional<char> letter;  // empty: fallback signal
    std::string raw;
    std::vector<std::string> warnings;
};
DirectionResult choose_direction(Oracle& oracle, const Question& q, const ImageHandle& annotated, int n_candidates,
                                 const std::string& context);

struct AnswerResult {
    std::optional<std::string> answer;  // letter for MC, sentence for open; empty: unanswered
    std::string raw;
    std::vector<std::string> warnings;
};
AnswerResult answer_question(Oracle& oracle, const Question& q, const std::string& context, const ImageHandle& image);

}  // namespace meqa
