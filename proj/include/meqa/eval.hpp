#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "meqa/agent.hpp"

namespace meqa {

// Lowercased whitespace tokens with punctuation stripped.
std::vector<std::string> rouge_tokens(const std::string& text);
std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

// 2 * LCS / (|C| + |R|). Both empty gives 0 and a warning.
double rouge_l(const std::string& candidate, const std::string& reference, std::vector<std::string>* warnings = nullptr);

// Mean of N_i / (sqrt(S_i) * gamma_s) over (steps, room size) pairs.
double norm_step(const std::vector<std::pair<int, double>>& episodes, double gamma_s);

// Percent exact matches; empty predictions count as wrong.
double success_rate(const std::vector<std::optional<std::string>>& predictions, const std::vector<std::string>& golds);

struct EpisodeRow {
    std::string scene;
    std::string question_id;
    std::string flags;
    int steps = 0;
    double floor_area = 0.0;
    std::optional<std::string> answer;
    std::string gold;
    bool correct = false;
    bool open = false;
    double rouge = 0.0;
    std::optional<double> judge;
    std::string stop_reason;
    std::string error;  // non-empty when the episode failed
};

struct MetricsReport {
    std::string label;
    double success_rate = 0.0;
    std::optional<double> rouge_l;  // over open questions only
    double norm_step = 0.0;
    std::optional<double> judge_score;
    std::vector<EpisodeRow> rows;

    std::string to_jsonl() const;
    std::string summary_line() const;
};

// Top-down map: unexplored black, free light gray, occupied dark gray, other
// explored cells mid gray; trajectory in red, last pose as a circle. Row 0 is +y.
RgbImage render_map(const Map2D& map, const std::vector<Pose>& trajectory, int scale = 4);
// 8-bit grayscale of the same map, one pixel per cell.
std::vector<std::uint8_t> map_gray(const Map2D& map);
// x,y,yaw per line with a header row.
std::string trajectory_csv(const std::vector<Pose>& trajectory);

// Judge score in [1, 5] from a reply "Score: n"; empty when unparsable.
std::optional<double> parse_judge_score(const std::string& reply);
std::optional<double> judge_score(Oracle& judge, const Question& question, const std::string& candidate);

EpisodeRow row_from_trace(const EpisodeTrace& trace);
// Pure function of the traces; the judge, when given, scores open answers.
MetricsReport metrics_from_traces(const std::vector<EpisodeTrace>& traces, double gamma_s, Oracle* judge = nullptr,
                                  const std::string& label = "");

struct AblationResult {
    AblationFlags flags;
    MetricsReport report;
    std::vector<EpisodeTrace> traces;
};

// Runs every question under every flag set with the scripted oracle. Episode
// errors are recorded in the rows, not thrown.
std::vector<AblationResult> ablate(const std::map<std::string, Scene>& scenes, const std::vector<Question>& questions,
                                   const std::vector<AblationFlags>& flag_sets, const HyperParams& params,
                                   const Encoder& encoder, int workers = 1);

}  // namespace meqa
