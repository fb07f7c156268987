#include "meqa/oracle.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <regex>
#include <sstream>

#include "meqa/simulator.hpp"

namespace meqa {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Questions

std::string Question::prompt_text() const {
    if (!is_mc()) return text;
    std::string out = text;
    for (std::size_t i = 0; i < options.size(); ++i)
        out += "\n" + std::string(1, static_cast<char>('A' + i)) + ". " + options[i];
    return out;
}

void Question::validate() const {
    if (id.empty()) throw ValidationError("question id must be non-empty");
    if (text.empty()) throw ValidationError("question " + id + ": text must be non-empty");
    if (type != "mc" && type != "open") throw ValidationError("question " + id + ": type must be mc or open");
    if (is_mc()) {
        if (options.size() < 2 || options.size() > 26) throw ValidationError("question " + id + ": needs 2-26 options");
        if (answer.size() != 1 || answer[0] < 'A' || answer[0] >= 'A' + static_cast<int>(options.size()))
            throw ValidationError("question " + id + ": answer must be an option letter");
    } else if (answer.empty()) {
        throw ValidationError("question " + id + ": open answer must be non-empty");
    }
}

namespace {

Question question_from(const json& q) {
    Question x;
    x.id = q.at("id").get<std::string>();
    x.scene = q.at("scene").get<std::string>();
    x.type = q.value("type", "mc");
    x.text = q.at("question").get<std::string>();
    x.options = q.value("options", std::vector<std::string>{});
    x.answer = q.at("answer").get<std::string>();
    x.entities = q.value("entities", std::vector<int>{});
    return x;
}

}  // namespace

std::string question_to_json(const Question& q) {
    return json{{"id", q.id},           {"scene", q.scene},   {"type", q.type},        {"question", q.text},
                {"options", q.options}, {"answer", q.answer}, {"entities", q.entities}}
        .dump();
}

Question question_from_json(const std::string& text) {
    Question q;
    try {
        q = question_from(json::parse(text));
    } catch (const json::exception& e) {
        throw ValidationError(std::string("question record: ") + e.what());
    }
    q.validate();
    return q;
}

std::vector<Question> load_questions(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open question file " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw ValidationError("question file " + path + " is not valid JSON: " + e.what());
    }
    const json& items = j.is_array() ? j : j.at("questions");
    std::vector<Question> out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const json& q = items[i];
        Question x;
        try {
            x = question_from(q);
        } catch (const json::exception& e) {
            throw ValidationError("questions[" + std::to_string(i) + "]: " + e.what());
        }
        x.validate();
        out.push_back(std::move(x));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Templates

namespace {

const char* kSceneCaption =
    "Describe this image. Output in the following format:\n"
    "```\n"
    "Room: <room>\n"
    "Object: <obj1>, <obj2>,...\n"
    "Description: <description>\n"
    "```";

const char* kObjectCaption =
    "Please describe the category, arrtibute, and description of the object.\n"
    "Output in the following format:\n"
    "```\n"
    "cate: [category]\n"
    "attr: [arrtibute]\n"
    "desc: [description]\n"
    "```";

const char* kConfidence =
    "Consider the question: `{Question}'. How confident are you in answering this question from your current "
    "perspective?\n"
    "A. Very low\n"
    "B. Low\n"
    "C. Medium\n"
    "D. High\n"
    "E. Very high\n"
    "Answer with the option's letter from the given choices directly.";

const char* kDirection =
    "Consider the question: '{Question}', and you will explore the environment for answering it.\n"
    "Which direction (black letters on the image) would you explore then? Provide reasons and answer with a single "
    "letter.";

const char* kAnswerMc = "{Question} Answer with the option's letter from the given choices directly.";
const char* kAnswerOpen = "{Question} Answer with the brief sentence.";

// Placeholder: no judge prompt is published for the score metric.
const char* kJudge =
    "{Question}\n"
    "Rate how well the candidate answer matches the reference answer on a scale from 1 to 5. "
    "Reply in the format 'Score: <n>'.";

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
        s.replace(pos, from.size(), to);
    return s;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string strip_brackets(std::string s) {
    s = trim(s);
    if (s.size() >= 2 && ((s.front() == '[' && s.back() == ']') || (s.front() == '<' && s.back() == '>')))
        s = trim(s.substr(1, s.size() - 2));
    return s;
}

}  // namespace

std::string template_name(TemplateId id) {
    switch (id) {
        case TemplateId::scene_caption: return "scene_caption";
        case TemplateId::object_caption: return "object_caption";
        case TemplateId::confidence: return "confidence";
        case TemplateId::direction: return "direction";
        case TemplateId::answer_mc: return "answer_mc";
        case TemplateId::answer_open: return "answer_open";
        case TemplateId::judge: return "judge";
    }
    return "";
}

TemplateId parse_template_id(const std::string& name) {
    for (auto id : {TemplateId::scene_caption, TemplateId::object_caption, TemplateId::confidence,
                    TemplateId::direction, TemplateId::answer_mc, TemplateId::answer_open, TemplateId::judge})
        if (template_name(id) == name) return id;
    throw InvalidArgument("unknown template id '" + name + "'");
}

std::string fill_template(TemplateId id, const std::string& question) {
    const char* t = "";
    switch (id) {
        case TemplateId::scene_caption: t = kSceneCaption; break;
        case TemplateId::object_caption: t = kObjectCaption; break;
        case TemplateId::confidence: t = kConfidence; break;
        case TemplateId::direction: t = kDirection; break;
        case TemplateId::answer_mc: t = kAnswerMc; break;
        case TemplateId::answer_open: t = kAnswerOpen; break;
        case TemplateId::judge: t = kJudge; break;
    }
    return replace_all(t, "{Question}", question);
}

std::string compose_prompt(TemplateId id, const std::string& question, const std::string& context) {
    const std::string body = fill_template(id, question);
    if (context.empty()) return body;
    return "Memory:\n" + context + (context.back() == '\n' ? "" : "\n") + "\n" + body;
}

// ---------------------------------------------------------------------------
// Parsers

SceneCaption parse_scene_caption(const std::string& text, ParseNotes& notes) {
    SceneCaption c;
    bool room = false, objects = false, desc = false;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        const auto colon = t.find(':');
        if (colon == std::string::npos) continue;
        const std::string key = lower(trim(t.substr(0, colon)));
        const std::string value = trim(t.substr(colon + 1));
        if (key == "room" && !room) {
            c.room = strip_brackets(value);
            room = true;
        } else if ((key == "object" || key == "objects") && !objects) {
            objects = true;
            std::istringstream parts(value);
            std::string part;
            while (std::getline(parts, part, ',')) {
                part = strip_brackets(part);
                if (!part.empty() && part != "..." && part != "...") c.objects.push_back(part);
            }
        } else if (key == "description" && !desc) {
            c.description = strip_brackets(value);
            desc = true;
        }
    }
    if (!room) notes.warnings.push_back("scene caption: missing Room line");
    if (!objects) notes.warnings.push_back("scene caption: missing Object line");
    if (!desc) notes.warnings.push_back("scene caption: missing Description line");
    if (room && c.room.empty()) notes.warnings.push_back("scene caption: empty room");
    return c;
}

ObjectCaption parse_object_caption(const std::string& text, ParseNotes& notes) {
    ObjectCaption c;
    bool cate = false, attr = false, desc = false;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        const auto colon = t.find(':');
        if (colon == std::string::npos) continue;
        const std::string key = lower(trim(t.substr(0, colon)));
        const std::string value = strip_brackets(t.substr(colon + 1));
        if (key == "cate" && !cate) {
            c.category = value;
            cate = true;
        } else if ((key == "attr" || key == "arrtibute" || key == "attribute") && !attr) {
            c.attribute = value;
            attr = true;
        } else if (key == "desc" && !desc) {
            c.description = value;
            desc = true;
        }
    }
    if (!cate || !attr || !desc) {
        notes.warnings.push_back("object caption: grammar violation, expected cate/attr/desc lines");
        return {};
    }
    return c;
}

std::optional<char> parse_letter(const std::string& text, int n, ParseNotes& notes) {
    const std::string t = trim(text);
    const char last = static_cast<char>('A' + std::clamp(n, 1, 26) - 1);
    auto in_range = [&](char c) { return c >= 'A' && c <= last; };
    auto accept = [&](char c) -> std::optional<char> {
        if (in_range(c)) return c;
        notes.warnings.push_back(std::string("letter '") + c + "' is outside A-" + last);
        return std::nullopt;
    };

    // A bare letter, optionally with punctuation: "C", "(C)", "C.", "C) Medium".
    // "A red door ..." is an article, not a letter.
    static const std::regex bare(R"(^\(?([A-Za-z])([\)\.:]?)(\s+(.*))?$)");
    std::smatch m;
    if (std::regex_match(t, m, bare)) {
        const char c = m[1].str()[0];
        const std::string rest = m[4].str();
        const bool sentence = !rest.empty() && (std::islower(static_cast<unsigned char>(c)) ||
                                                (m[2].str().empty() && std::islower(static_cast<unsigned char>(rest[0]))));
        if (!sentence) return accept(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
    // "Answer: B", "the answer is (B)", "direction B".
    static const std::regex keyed(R"((?:answer|choice|option|direction|letter)\s*(?:is|:)?\s*\(?([A-Z])\b)",
                                  std::regex::icase);
    std::optional<char> found;
    for (auto it = std::sregex_iterator(t.begin(), t.end(), keyed); it != std::sregex_iterator(); ++it) {
        const std::string g = (*it)[1].str();
        if (std::isupper(static_cast<unsigned char>(g[0]))) found = g[0];
    }
    if (found) return accept(*found);
    // Last standalone capital that is not the article "A" opening a phrase.
    static const std::regex standalone(R"((^|[^A-Za-z])([A-Z])(?![A-Za-z]))");
    for (auto it = std::sregex_iterator(t.begin(), t.end(), standalone); it != std::sregex_iterator(); ++it) {
        const char c = (*it)[2].str()[0];
        const auto pos = static_cast<std::size_t>(it->position(2));
        const bool article = c == 'A' && pos + 2 < t.size() && t[pos + 1] == ' ' &&
                             std::islower(static_cast<unsigned char>(t[pos + 2]));
        if (!article) found = c;
    }
    if (found) return accept(*found);
    notes.warnings.push_back("no option letter found in reply");
    return std::nullopt;
}

double confidence_value(char letter) {
    switch (letter) {
        case 'A': return 0.0;
        case 'B': return 0.25;
        case 'C': return 0.5;
        case 'D': return 0.75;
        case 'E': return 1.0;
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// Calls

namespace {

void append(std::vector<std::string>& to, const std::vector<std::string>& from) {
    to.insert(to.end(), from.begin(), from.end());
}

}  // namespace

SceneCaptionResult describe_scene(Oracle& oracle, const ImageHandle& image) {
    SceneCaptionResult r;
    try {
        const std::string raw = oracle.complete({TemplateId::scene_caption, fill_template(TemplateId::scene_caption), {image}});
        ParseNotes notes;
        r.caption = parse_scene_caption(raw, notes);
        r.ok = notes.warnings.empty();
        append(r.warnings, notes.warnings);
    } catch (const OracleError& e) {
        r.warnings.push_back(std::string("scene caption failed: ") + e.what());
    }
    return r;
}

ObjectCaptionResult describe_object(Oracle& oracle, const ImageHandle& crop) {
    ObjectCaptionResult r;
    try {
        const std::string raw =
            oracle.complete({TemplateId::object_caption, fill_template(TemplateId::object_caption), {crop}});
        ParseNotes notes;
        r.caption = parse_object_caption(raw, notes);
        r.ok = notes.warnings.empty();
        append(r.warnings, notes.warnings);
    } catch (const OracleError& e) {
        r.warnings.push_back(std::string("object caption failed: ") + e.what());
    }
    return r;
}

ConfidenceResult confidence(Oracle& oracle, const Question& q, const std::string& context, const ImageHandle& image) {
    ConfidenceResult r;
    try {
        r.raw = oracle.complete(
            {TemplateId::confidence, compose_prompt(TemplateId::confidence, q.prompt_text(), context), {image}});
        ParseNotes notes;
        const auto letter = parse_letter(r.raw, 5, notes);
        append(r.warnings, notes.warnings);
        if (letter) {
            r.letter = *letter;
        } else {
            r.warnings.push_back("confidence unparsable, using A");
        }
    } catch (const OracleError& e) {
        r.warnings.push_back(std::string("confidence failed, using A: ") + e.what());
    }
    r.value = confidence_value(r.letter);
    return r;
}

DirectionResult choose_direction(Oracle& oracle, const Question& q, const ImageHandle& annotated, int n_candidates,
                                 const std::string& context) {
    DirectionResult r;
    try {
        r.raw = oracle.complete(
            {TemplateId::direction, compose_prompt(TemplateId::direction, q.prompt_text(), context), {annotated}});
        ParseNotes notes;
        r.letter = parse_letter(r.raw, n_candidates, notes);
        append(r.warnings, notes.warnings);
    } catch (const OracleError& e) {
        r.warnings.push_back(std::string("direction failed: ") + e.what());
    }
    return r;
}

AnswerResult answer_question(Oracle& oracle, const Question& q, const std::string& context, const ImageHandle& image) {
    AnswerResult r;
    const TemplateId id = q.is_mc() ? TemplateId::answer_mc : TemplateId::answer_open;
    try {
        r.raw = oracle.complete({id, compose_prompt(id, q.prompt_text(), context), {image}});
        if (q.is_mc()) {
            ParseNotes notes;
            const auto letter = parse_letter(r.raw, static_cast<int>(q.options.size()), notes);
            append(r.warnings, notes.warnings);
            if (letter) r.answer = std::string(1, *letter);
            else r.warnings.push_back("invalid answer letter, counted as unanswered");
        } else {
            const std::string s = trim(r.raw);
            if (!s.empty()) r.answer = s;
            else r.warnings.push_back("empty open answer");
        }
    } catch (const OracleError& e) {
        r.warnings.push_back(std::string("answer failed: ") + e.what());
    }
    return r;
}

// ---------------------------------------------------------------------------
// Scripted oracle

ScriptedOracle::ScriptedOracle(const Scene& scene, Question question)
    : scene_(scene), question_(std::move(question)) {}

std::string ScriptedOracle::object_description(int object_id) const {
    const SceneObject* o = scene_.object(object_id);
    if (!o) return "";
    const Room* room = scene_.room_at(o->position);
    char buf[64];
    std::snprintf(buf, sizeof buf, " at (%.1f, %.1f)", o->position.x, o->position.y);
    return o->color + " " + o->category + " in the " + (room ? room->name : std::string("open space")) + buf;
}

bool ScriptedOracle::entity_present(int object_id, const std::string& prompt) const {
    const std::string d = object_description(object_id);
    return !d.empty() && prompt.find(d) != std::string::npos;
}

bool ScriptedOracle::entity_known(int object_id, const OracleRequest& request) const {
    if (entity_present(object_id, request.prompt)) return true;
    for (const auto& img : request.images)
        if (std::find(img.meta.visible_objects.begin(), img.meta.visible_objects.end(), object_id) !=
            img.meta.visible_objects.end())
            return true;
    return false;
}

std::string ScriptedOracle::complete(const OracleRequest& request) {
    const ImageMeta meta = request.images.empty() ? ImageMeta{} : request.images.front().meta;
    const bool all_present = std::all_of(question_.entities.begin(), question_.entities.end(),
                                         [&](int id) { return entity_known(id, request); });
    switch (request.template_id) {
        case TemplateId::scene_caption: {
            const bool blank = request.images.empty() || black_fraction(request.images.front().image) >= 1.0;
            if (blank || !meta.pose) return "Room: \nObject: \nDescription: nothing is visible";
            const Room* room = scene_.room_at(meta.pose->xy());
            std::string objects;
            for (int id : meta.visible_objects)
                if (const SceneObject* o = scene_.object(id)) objects += (objects.empty() ? "" : ", ") + o->category;
            const std::string name = room ? room->name : "hallway";
            return "```\nRoom: " + name + "\nObject: " + objects + "\nDescription: a view of the " + name + " with " +
                   std::to_string(meta.visible_objects.size()) + " visible objects\n```";
        }
        case TemplateId::object_caption: {
            const SceneObject* o = meta.object_id ? scene_.object(*meta.object_id) : nullptr;
            if (!o) return "cate: unknown\nattr: \ndesc: ";
            std::string attr = o->color;
            for (const auto& a : o->attributes) attr += ", " + a;
            return "cate: " + o->category + "\nattr: " + attr + "\ndesc: " + object_description(o->id);
        }
        case TemplateId::confidence: return all_present ? "E" : "B";
        case TemplateId::direction: {
            if (meta.candidates.empty()) return "No candidates are marked.";
            const Vec2 agent = meta.pose ? meta.pose->xy() : Vec2{};
            // Nearest entity not yet present in the prompt; any entity when all are known.
            std::optional<Vec2> goal;
            double best = std::numeric_limits<double>::infinity();
            for (int pass = 0; pass < 2 && !goal; ++pass)
                for (int id : question_.entities) {
                    const SceneObject* o = scene_.object(id);
                    if (!o || (pass == 0 && entity_known(id, request))) continue;
                    const double d = (o->position - agent).norm();
                    if (d < best) {
                        best = d;
                        goal = o->position;
                    }
                }
            char pick = meta.candidates.begin()->first;
            if (goal) {
                double best_c = std::numeric_limits<double>::infinity();
                for (const auto& [letter, pos] : meta.candidates) {
                    const double d = (pos - *goal).norm();
                    if (d < best_c) {
                        best_c = d;
                        pick = letter;
                    }
                }
            }
            return "That direction leads toward the region most relevant to the question. Answer: " +
                   std::string(1, pick);
        }
        case TemplateId::answer_mc: {
            if (all_present) return question_.answer;
            for (std::size_t i = 0; i < question_.options.size(); ++i) {
                const std::string letter(1, static_cast<char>('A' + i));
                if (letter != question_.answer) return letter;
            }
            return "A";
        }
        case TemplateId::answer_open:
            return all_present ? question_.answer : "I could not find the object in question.";
        case TemplateId::judge: throw OracleError("the scripted oracle does not judge answers");
    }
    throw OracleError("unknown template");
}

}  // namespace meqa
