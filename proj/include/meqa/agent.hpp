#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "meqa/config.hpp"
#include "meqa/encoder.hpp"
#include "meqa/mapping.hpp"
#include "meqa/memory.hpp"
#include "meqa/oracle.hpp"
#include "meqa/retrieval.hpp"
#include "meqa/simulator.hpp"

namespace meqa {

// Which modules receive retrieved memories: stop (S), answer (A), planner (P).
struct AblationFlags {
    bool stop = true;
    bool answer = true;
    bool planner = true;

    // "None", "S", "A", "P" or '+'-joined combinations such as "S+A+P".
    static AblationFlags parse(const std::string& text);
    std::string name() const;
    bool operator==(const AblationFlags&) const = default;
};

// ---------------------------------------------------------------------------
// Planner injection

struct LabeledCandidate {
    char letter = 'A';
    CandidatePose candidate;
    PixelCoord pixel;
};

// Frontiers with their candidate poses restricted to those that project into the view.
// Indices are preserved; frontiers out of view keep their cells but no poses.
std::vector<Frontier> in_view(const std::vector<Frontier>& frontiers, const Pose& pose, const CameraModel& cam);

// Candidates whose floor point projects inside the image, lettered A, B, ... in input order.
std::vector<LabeledCandidate> label_candidates(const CandidateSet& set, const Pose& pose, const CameraModel& cam);

RgbImage annotate_observation(const RgbImage& rgb, const std::vector<LabeledCandidate>& labels, int circle_radius);

struct SemanticWeight {
    std::vector<double> one_hot;  // over labeled candidates; empty on fallback
    int chosen_frontier = -1;
    bool fallback = false;
    int nx = 0, ny = 0;
    std::vector<double> field;    // smoothed weight per map cell, row-major from y = 0

    double at(Cell c) const { return field[static_cast<std::size_t>(c.y) * nx + c.x]; }
    // Highest smoothed weight over a frontier's cells.
    double score(const Frontier& f) const;
};

// Unit mass on one frontier's cells, Gaussian-smoothed with sigma in cells.
SemanticWeight splat_weight(const Map2D& map, const std::vector<Frontier>& frontiers, int frontier, double sigma);

struct PlannerInjection {
    SemanticWeight weight;
    std::vector<LabeledCandidate> labels;
    RgbImage annotated;
    DirectionResult direction;
};

PlannerInjection inject_planner(Oracle& oracle, const Question& question, const Observation& obs,
                                const ImageMeta& meta, const std::vector<Frontier>& frontiers,
                                const CandidateSet& candidates, const Map2D& map, const std::string& context,
                                const HyperParams& params);

// ---------------------------------------------------------------------------
// Stop, answer, plan

struct StopDecision {
    bool stop = false;
    bool forced = false;
    ConfidenceResult confidence;
};

// Confidence value >= gamma stops; step >= max_steps - 1 stops regardless.
StopDecision stop_criterion(Oracle& oracle, const Question& question, const std::string& context,
                            const ImageHandle& image, int step, int max_steps, double gamma);

AnswerResult answer(Oracle& oracle, const Question& question, const std::string& context, const std::string& state_line,
                    const ImageHandle& image);

// Dijkstra over traversable cells, 8-connected.
struct Reachability {
    Cell start;
    int nx = 0, ny = 0;
    std::vector<double> dist;  // infinity where unreachable
    std::vector<int> parent;   // linear index, -1 at the start or unreachable

    bool reachable(Cell c) const;
    double distance(Cell c) const { return dist[static_cast<std::size_t>(c.y) * nx + c.x]; }
    std::vector<Cell> path_to(Cell c) const;  // start first
};

Reachability reachability(const Map2D& map, Vec2 from);

struct PlanResult {
    std::optional<Pose> target;  // empty: exploration exhausted
    int frontier = -1;
    std::string decision;
    bool half_plane = false;     // chosen frontier unreachable; nearest in its half-plane used
};

// Highest-weighted reachable frontier, nearest first on ties; the navigation point
// is the farthest cell on the path to it that lies within the distance band and in
// straight-line sight through traversable cells.
PlanResult plan_next(const Pose& pose, const Map2D& map, const std::vector<Frontier>& frontiers,
                     const SemanticWeight& weight, const HyperParams& params);

// Relative offset label such as "move forward-left 2.1 m".
std::string decision_label(const Pose& from, const Pose& to);

// ---------------------------------------------------------------------------
// Episodes

struct RetrievalLog {
    int k = 0;
    double entropy = 0.0;
    std::vector<std::int64_t> indices;
    std::vector<double> similarities;
};

struct StepRecord {
    int step = 0;
    Pose pose;
    std::string observation_ref;
    std::vector<int> detections;
    bool memory_updated = false;
    double max_similarity = 0.0;
    RetrievalLog retrieval;
    std::vector<std::int64_t> stop_context;
    std::vector<std::int64_t> answer_context;
    std::vector<std::int64_t> planner_context;
    std::optional<char> confidence;  // empty before the first stop check
    std::string decision;            // "answer" or "move"
    std::optional<Pose> next_pose;
    std::string move_label;
    std::optional<char> direction;
    int candidates = 0;
    std::optional<std::string> answer;  // set when decision == "answer"
    std::vector<std::string> warnings;
};

struct EpisodeTrace {
    std::string scene;
    std::string question_id;
    std::string question;
    std::string question_json;  // full question record, for replay
    std::string config_yaml;    // effective hyper-parameters, for replay
    std::string flags;
    std::uint64_t seed = 0;
    int spawn = 0;
    int max_steps = 0;
    int scene_id = 0;
    std::optional<int> retrieved_scene;  // from scene retrieval on a loaded bank
    std::string bank;                    // loaded bank directory, if any
    std::vector<StepRecord> steps;
    std::optional<std::string> answer;
    std::string gold;
    bool correct = false;
    std::string stop_reason;  // "confident", "max_steps", "exhausted"
    double floor_area = 0.0;

    int num_steps() const { return static_cast<int>(steps.size()); }
    // One JSON object per line: header, steps, result.
    std::string to_jsonl() const;
    static EpisodeTrace from_jsonl(const std::string& text);
};

void save_trace(const EpisodeTrace& trace, const std::filesystem::path& path);
EpisodeTrace load_trace(const std::filesystem::path& path);

// Per-step artifacts for renders; not part of the trace.
struct StepArtifacts {
    int step = 0;
    const Observation* observation = nullptr;
    const RgbImage* annotated = nullptr;  // null when the planner did not run
    const Map2D* map = nullptr;
};

struct EpisodeOptions {
    AblationFlags flags;
    int spawn = 0;
    std::optional<MemoryStore> bank;   // persisted memory from earlier episodes
    std::string bank_path;             // recorded in the trace
    std::function<void(const StepArtifacts&)> on_step;
};

struct EpisodeResult {
    EpisodeTrace trace;
    MemoryStore store;
};

int max_steps_for(const Scene& scene, const HyperParams& params);

EpisodeResult run_episode(const Scene& scene, const Question& question, const HyperParams& params, Oracle& oracle,
                          const Encoder& encoder, EpisodeOptions options);

}  // namespace meqa
