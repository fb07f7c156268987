#include "meqa/eval.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <regex>
#include <sstream>
#include <thread>

namespace meqa {

using nlohmann::json;

std::vector<std::string> rouge_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string word;
    while (in >> word) {
        std::string t;
        for (char ch : word) {
            const auto c = static_cast<unsigned char>(ch);
            if (!std::ispunct(c)) t += static_cast<char>(std::tolower(c));
        }
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l(const std::string& candidate, const std::string& reference, std::vector<std::string>* warnings) {
    const auto c = rouge_tokens(candidate);
    const auto r = rouge_tokens(reference);
    if (c.empty() && r.empty()) {
        if (warnings) warnings->push_back("rouge_l: both strings are empty");
        return 0.0;
    }
    return 2.0 * static_cast<double>(lcs_length(c, r)) / static_cast<double>(c.size() + r.size());
}

double norm_step(const std::vector<std::pair<int, double>>& episodes, double gamma_s) {
    if (episodes.empty()) throw InvalidArgument("norm_step needs at least one episode");
    if (!(gamma_s > 0.0)) throw InvalidArgument("norm_step needs gamma_s > 0");
    double sum = 0.0;
    for (const auto& [n, s] : episodes) {
        if (!(s > 0.0)) throw InvalidArgument("norm_step needs a positive room size");
        if (n < 0) throw InvalidArgument("norm_step needs a non-negative step count");
        sum += n / (std::sqrt(s) * gamma_s);
    }
    return sum / static_cast<double>(episodes.size());
}

double success_rate(const std::vector<std::optional<std::string>>& predictions, const std::vector<std::string>& golds) {
    if (predictions.size() != golds.size())
        throw InvalidArgument("success_rate: " + std::to_string(predictions.size()) + " predictions for " +
                              std::to_string(golds.size()) + " golds");
    if (golds.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < golds.size(); ++i)
        if (predictions[i] && *predictions[i] == golds[i]) ++hits;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(golds.size());
}

namespace {

std::uint8_t cell_shade(const Map2D& map, Cell c) {
    if (!map.explored(c)) return 0;
    if (map.occupied(c)) return 70;
    if (map.traversable(c)) return 220;
    return 140;
}

}  // namespace

RgbImage render_map(const Map2D& map, const std::vector<Pose>& trajectory, int scale) {
    if (map.empty()) throw InvalidArgument("render_map: empty map");
    if (scale < 1) throw InvalidArgument("render_map: scale must be >= 1");
    RgbImage img(map.nx() * scale, map.ny() * scale);
    for (int y = 0; y < map.ny(); ++y)
        for (int x = 0; x < map.nx(); ++x) {
            const std::uint8_t g = cell_shade(map, {x, y});
            for (int dy = 0; dy < scale; ++dy)
                for (int dx = 0; dx < scale; ++dx) img.set(x * scale + dx, (map.ny() - 1 - y) * scale + dy, {g, g, g});
        }
    auto to_px = [&](Vec2 p, int& px, int& py) {
        px = static_cast<int>(std::floor((p.x - map.origin().x) / map.resolution() * scale));
        py = static_cast<int>(std::floor((map.ny() - (p.y - map.origin().y) / map.resolution()) * scale));
    };
    const Rgb red{220, 30, 30};
    for (std::size_t i = 1; i < trajectory.size(); ++i) {
        int x0, y0, x1, y1;
        to_px(trajectory[i - 1].xy(), x0, y0);
        to_px(trajectory[i].xy(), x1, y1);
        draw_line(img, x0, y0, x1, y1, red);
    }
    if (!trajectory.empty()) {
        int x, y;
        to_px(trajectory.back().xy(), x, y);
        draw_circle(img, x, y, std::max(2, scale), red, true);
    }
    return img;
}

std::vector<std::uint8_t> map_gray(const Map2D& map) {
    std::vector<std::uint8_t> out(static_cast<std::size_t>(map.nx()) * map.ny());
    for (int y = 0; y < map.ny(); ++y)
        for (int x = 0; x < map.nx(); ++x)
            out[static_cast<std::size_t>(map.ny() - 1 - y) * map.nx() + x] = cell_shade(map, {x, y});
    return out;
}

std::string trajectory_csv(const std::vector<Pose>& trajectory) {
    std::string out = "x,y,yaw\n";
    char buf[96];
    for (const auto& p : trajectory) {
        std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f\n", p.position.x, p.position.y, p.yaw);
        out += buf;
    }
    return out;
}

std::optional<double> parse_judge_score(const std::string& reply) {
    static const std::regex re(R"(score\s*[:=]?\s*([1-5])(?![0-9]))", std::regex::icase);
    std::smatch m;
    if (!std::regex_search(reply, m, re)) return std::nullopt;
    return std::stod(m[1].str());
}

std::optional<double> judge_score(Oracle& judge, const Question& question, const std::string& candidate) {
    const std::string body = "Question: " + question.prompt_text() + "\nReference answer: " + question.answer +
                             "\nCandidate answer: " + candidate;
    try {
        return parse_judge_score(judge.complete({TemplateId::judge, fill_template(TemplateId::judge, body), {}}));
    } catch (const OracleError&) {
        return std::nullopt;
    }
}

EpisodeRow row_from_trace(const EpisodeTrace& trace) {
    EpisodeRow row;
    row.scene = trace.scene;
    row.question_id = trace.question_id;
    row.flags = trace.flags;
    row.steps = trace.num_steps();
    row.floor_area = trace.floor_area;
    row.answer = trace.answer;
    row.gold = trace.gold;
    row.correct = trace.correct;
    row.stop_reason = trace.stop_reason;
    if (!trace.question_json.empty()) row.open = !question_from_json(trace.question_json).is_mc();
    if (row.open) row.rouge = rouge_l(trace.answer.value_or(""), trace.gold);
    return row;
}

namespace {

MetricsReport summarize(std::vector<EpisodeRow> rows, double gamma_s, const std::string& label) {
    MetricsReport r;
    r.label = label;
    std::vector<std::optional<std::string>> preds;
    std::vector<std::string> golds;
    std::vector<std::pair<int, double>> steps;
    double rouge_sum = 0.0, judge_sum = 0.0;
    int open = 0, judged = 0;
    for (const auto& row : rows) {
        preds.push_back(row.answer);
        golds.push_back(row.gold);
        if (row.error.empty()) steps.emplace_back(row.steps, row.floor_area);
        if (row.open) {
            rouge_sum += row.rouge;
            ++open;
        }
        if (row.judge) {
            judge_sum += *row.judge;
            ++judged;
        }
    }
    r.success_rate = success_rate(preds, golds);
    if (open > 0) r.rouge_l = rouge_sum / open;
    if (!steps.empty()) r.norm_step = norm_step(steps, gamma_s);
    if (judged > 0) r.judge_score = judge_sum / judged;
    r.rows = std::move(rows);
    return r;
}

}  // namespace

MetricsReport metrics_from_traces(const std::vector<EpisodeTrace>& traces, double gamma_s, Oracle* judge,
                                  const std::string& label) {
    std::vector<EpisodeRow> rows;
    for (const auto& t : traces) {
        EpisodeRow row = row_from_trace(t);
        if (judge && row.open && !t.question_json.empty())
            row.judge = judge_score(*judge, question_from_json(t.question_json), t.answer.value_or(""));
        rows.push_back(std::move(row));
    }
    return summarize(std::move(rows), gamma_s, label);
}

std::string MetricsReport::summary_line() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-8s episodes=%zu success=%.1f%% norm_step=%.3f", label.c_str(), rows.size(),
                  success_rate, norm_step);
    std::string out = buf;
    if (rouge_l) {
        std::snprintf(buf, sizeof buf, " rouge_l=%.3f", *rouge_l);
        out += buf;
    }
    if (judge_score) {
        std::snprintf(buf, sizeof buf, " judge=%.2f", *judge_score);
        out += buf;
    }
    return out;
}

std::string MetricsReport::to_jsonl() const {
    std::string out;
    json summary = {{"kind", "summary"},
                    {"label", label},
                    {"episodes", rows.size()},
                    {"success_rate", success_rate},
                    {"norm_step", norm_step}};
    if (rouge_l) summary["rouge_l"] = *rouge_l;
    if (judge_score) summary["judge_score"] = *judge_score;
    out += summary.dump() + "\n";
    for (const auto& r : rows) {
        json j = {{"kind", "episode"},
                  {"scene", r.scene},
                  {"question_id", r.question_id},
                  {"flags", r.flags},
                  {"steps", r.steps},
                  {"floor_area", r.floor_area},
                  {"answer", r.answer ? json(*r.answer) : json(nullptr)},
                  {"gold", r.gold},
                  {"correct", r.correct},
                  {"stop_reason", r.stop_reason}};
        if (r.open) j["rouge_l"] = r.rouge;
        if (r.judge) j["judge"] = *r.judge;
        if (!r.error.empty()) j["error"] = r.error;
        out += j.dump() + "\n";
    }
    return out;
}

std::vector<AblationResult> ablate(const std::map<std::string, Scene>& scenes, const std::vector<Question>& questions,
                                   const std::vector<AblationFlags>& flag_sets, const HyperParams& params,
                                   const Encoder& encoder, int workers) {
    if (questions.empty()) throw InvalidArgument("ablate needs at least one question");
    if (flag_sets.empty()) throw InvalidArgument("ablate needs at least one flag set");
    struct Job {
        std::size_t set;
        std::size_t question;
    };
    std::vector<Job> jobs;
    for (std::size_t s = 0; s < flag_sets.size(); ++s)
        for (std::size_t q = 0; q < questions.size(); ++q) jobs.push_back({s, q});

    std::vector<std::optional<EpisodeTrace>> traces(jobs.size());
    std::vector<std::string> errors(jobs.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            const auto& q = questions[jobs[i].question];
            try {
                const auto it = scenes.find(q.scene);
                if (it == scenes.end()) throw ValidationError("question " + q.id + ": unknown scene '" + q.scene + "'");
                ScriptedOracle oracle(it->second, q);
                EpisodeOptions opt;
                opt.flags = flag_sets[jobs[i].set];
                traces[i] = run_episode(it->second, q, params, oracle, encoder, std::move(opt)).trace;
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const int n = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < n; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    std::vector<AblationResult> out;
    for (std::size_t s = 0; s < flag_sets.size(); ++s) {
        AblationResult r;
        r.flags = flag_sets[s];
        std::vector<EpisodeRow> rows;
        for (std::size_t i = 0; i < jobs.size(); ++i) {
            if (jobs[i].set != s) continue;
            if (traces[i]) {
                rows.push_back(row_from_trace(*traces[i]));
                r.traces.push_back(*traces[i]);
            } else {
                const auto& q = questions[jobs[i].question];
                EpisodeRow row;
                row.scene = q.scene;
                row.question_id = q.id;
                row.flags = r.flags.name();
                row.gold = q.answer;
                row.error = errors[i];
                rows.push_back(std::move(row));
            }
        }
        r.report = summarize(std::move(rows), params.gamma_s(), r.flags.name());
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace meqa
