// meqa: run, replay, ablate, score and render memory-centric EQA episodes.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "meqa/eval.hpp"
#include "meqa/remote_oracle.hpp"

#ifndef MEQA_DEFAULT_DATA_DIR
#define MEQA_DEFAULT_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace meqa;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string data = MEQA_DEFAULT_DATA_DIR;
    std::string config = "default";
};

struct OracleOptions {
    std::string kind = "scripted";
    EndpointConfig endpoint;
};

fs::path scene_path(const Common& c, const std::string& scene) {
    if (scene.ends_with(".json")) return scene;
    return fs::path(c.data) / "scenes" / (scene + ".json");
}

Scene load_named_scene(const Common& c, const std::string& scene) {
    const auto path = scene_path(c, scene);
    if (!fs::exists(path)) throw UsageError("scene file not found: " + path.string());
    return load_scene(path);
}

HyperParams load_params(const Common& c) {
    if (c.config == "builtin") return HyperParams::defaults();
    const fs::path path = c.config == "default" ? fs::path(c.data) / "config" / "default.yaml" : fs::path(c.config);
    if (!fs::exists(path)) throw UsageError("config file not found: " + path.string());
    return load_config(path);
}

std::unique_ptr<Encoder> make_encoder(const HyperParams& p) {
    return std::make_unique<MockEncoder>(p.encoder.dim, MockEncoder::parse_mode(p.encoder.mode), p.seed);
}

std::unique_ptr<Oracle> make_oracle(const OracleOptions& o, const Scene& scene, const Question& q) {
    if (o.kind == "scripted") return std::make_unique<ScriptedOracle>(scene, q);
    if (o.kind == "remote") return std::make_unique<RemoteOracle>(o.endpoint);
    throw UsageError("unknown oracle '" + o.kind + "' (expected scripted or remote)");
}

void add_oracle_options(CLI::App* cmd, OracleOptions& o) {
    cmd->add_option("--oracle", o.kind, "scripted or remote")->check(CLI::IsMember({"scripted", "remote"}));
    cmd->add_option("--endpoint", o.endpoint.url, "remote oracle URL, http://host:port/path");
    cmd->add_option("--token-env", o.endpoint.token_env, "environment variable holding the bearer token");
    cmd->add_option("--timeout", o.endpoint.timeout_s, "seconds per request");
    cmd->add_option("--retries", o.endpoint.retries, "extra attempts after a failure");
    cmd->add_option("--max-image-bytes", o.endpoint.max_image_bytes, "cap on each encoded PNG");
}

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--data", c.data, "data directory with scenes/, questions/ and config/")->capture_default_str();
    cmd->add_option("--config", c.config, "YAML config path, 'default' or 'builtin'")->capture_default_str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw PersistenceError("cannot write " + path.string());
    f << text;
}

std::string trace_name(const EpisodeTrace& t) { return t.question_id + "." + t.flags + ".trace.jsonl"; }

// Re-runs the episode recorded in a trace header.
EpisodeResult rerun(const EpisodeTrace& recorded, const Common& c, const OracleOptions& o,
                    std::function<void(const StepArtifacts&)> on_step = {}) {
    const HyperParams params = parse_config(recorded.config_yaml);
    const Question q = question_from_json(recorded.question_json);
    const Scene scene = load_named_scene(c, recorded.scene);
    const auto encoder = make_encoder(params);
    const auto oracle = make_oracle(o, scene, q);
    EpisodeOptions opt;
    opt.flags = AblationFlags::parse(recorded.flags);
    opt.spawn = recorded.spawn;
    opt.on_step = std::move(on_step);
    if (!recorded.bank.empty()) {
        opt.bank = MemoryStore::load(recorded.bank);
        opt.bank_path = recorded.bank;
    }
    return run_episode(scene, q, params, *oracle, *encoder, std::move(opt));
}

// ---------------------------------------------------------------------------

struct RunArgs {
    Common common;
    OracleOptions oracle;
    std::string scene;
    std::string questions;
    std::vector<std::string> ids;
    std::string flags = "S+A+P";
    int spawn = 0;
    std::string bank;
    std::string save_bank;
    std::string out = "runs";
};

int cmd_run(const RunArgs& a) {
    const HyperParams params = load_params(a.common);
    const auto encoder = make_encoder(params);
    const auto questions_path =
        a.questions.empty() ? fs::path(a.common.data) / "questions" / "suite.json" : fs::path(a.questions);
    auto all = load_questions(questions_path.string());
    std::vector<Question> selected;
    for (const auto& q : all) {
        const bool id_ok = a.ids.empty() || std::find(a.ids.begin(), a.ids.end(), q.id) != a.ids.end();
        const bool scene_ok = a.scene.empty() || q.scene == a.scene || scene_path(a.common, a.scene).stem() == q.scene;
        if (id_ok && scene_ok) selected.push_back(q);
    }
    if (selected.empty()) throw UsageError("no question matches the --scene/--question filters");
    if (!a.save_bank.empty() && selected.size() != 1) throw UsageError("--save-bank needs exactly one question");

    std::vector<EpisodeTrace> traces;
    for (const auto& q : selected) {
        const Scene scene = load_named_scene(a.common, a.scene.empty() ? q.scene : a.scene);
        const auto oracle = make_oracle(a.oracle, scene, q);
        EpisodeOptions opt;
        opt.flags = AblationFlags::parse(a.flags);
        opt.spawn = a.spawn;
        if (!a.bank.empty()) {
            opt.bank = MemoryStore::load(a.bank);
            opt.bank_path = fs::absolute(a.bank).string();
        }
        auto result = run_episode(scene, q, params, *oracle, *encoder, std::move(opt));
        const fs::path trace_path = fs::path(a.out) / trace_name(result.trace);
        save_trace(result.trace, trace_path);
        if (!a.save_bank.empty()) result.store.persist(a.save_bank);
        std::printf("%s: %d steps, answer %s (gold %s), %s -> %s\n", q.id.c_str(), result.trace.num_steps(),
                    result.trace.answer.value_or("-").c_str(), q.answer.c_str(), result.trace.stop_reason.c_str(),
                    trace_path.string().c_str());
        traces.push_back(std::move(result.trace));
    }
    const auto report = metrics_from_traces(traces, params.gamma_s(), nullptr, a.flags);
    write_text(fs::path(a.out) / "report.jsonl", report.to_jsonl());
    std::printf("%s\n", report.summary_line().c_str());
    return 0;
}

struct ReplayArgs {
    Common common;
    OracleOptions oracle;
    std::string trace;
};

int cmd_replay(const ReplayArgs& a) {
    const std::string original = [&] {
        std::ifstream f(a.trace, std::ios::binary);
        std::stringstream ss;
        ss << f.rdbuf();
        return ss.str();
    }();
    const EpisodeTrace recorded = EpisodeTrace::from_jsonl(original);
    const std::string replayed = rerun(recorded, a.common, a.oracle).trace.to_jsonl();
    if (replayed == original) {
        std::printf("replay identical: %d steps, %zu bytes\n", recorded.num_steps(), original.size());
        return 0;
    }
    std::istringstream x(original), y(replayed);
    std::string lx, ly;
    for (int line = 1;; ++line) {
        const bool gx = static_cast<bool>(std::getline(x, lx));
        const bool gy = static_cast<bool>(std::getline(y, ly));
        if (!gx && !gy) break;
        if (lx != ly || gx != gy) {
            std::fprintf(stderr, "replay differs at line %d\n  recorded: %s\n  replayed: %s\n", line,
                         gx ? lx.c_str() : "<end>", gy ? ly.c_str() : "<end>");
            break;
        }
    }
    return kExitRuntime;
}

struct AblateArgs {
    Common common;
    std::string questions;
    std::vector<std::string> flags = {"None", "S", "S+A", "S+A+P"};
    std::string out = "ablation";
    int workers = 1;
};

int cmd_ablate(const AblateArgs& a) {
    const HyperParams params = load_params(a.common);
    const auto encoder = make_encoder(params);
    const auto questions_path =
        a.questions.empty() ? fs::path(a.common.data) / "questions" / "suite.json" : fs::path(a.questions);
    const auto questions = load_questions(questions_path.string());
    std::map<std::string, Scene> scenes;
    for (const auto& q : questions)
        if (!scenes.count(q.scene)) scenes.emplace(q.scene, load_named_scene(a.common, q.scene));
    std::vector<AblationFlags> sets;
    for (const auto& f : a.flags) sets.push_back(AblationFlags::parse(f));

    const auto results = ablate(scenes, questions, sets, params, *encoder, a.workers);
    std::string report;
    for (const auto& r : results) {
        std::printf("%s\n", r.report.summary_line().c_str());
        report += r.report.to_jsonl();
        for (const auto& t : r.traces) save_trace(t, fs::path(a.out) / "traces" / trace_name(t));
        for (const auto& row : r.report.rows)
            if (!row.error.empty()) std::fprintf(stderr, "%s [%s]: %s\n", row.question_id.c_str(), row.flags.c_str(), row.error.c_str());
    }
    write_text(fs::path(a.out) / "report.jsonl", report);
    return 0;
}

struct MetricsArgs {
    std::vector<std::string> inputs;
    std::string out;
    double gamma_s = 3.0;
    OracleOptions judge;
};

int cmd_metrics(const MetricsArgs& a) {
    std::vector<fs::path> files;
    for (const auto& in : a.inputs) {
        if (fs::is_directory(in)) {
            for (const auto& e : fs::recursive_directory_iterator(in))
                if (e.is_regular_file() && e.path().string().ends_with(".trace.jsonl")) files.push_back(e.path());
        } else {
            files.emplace_back(in);
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw UsageError("no trace files found");
    std::vector<EpisodeTrace> traces;
    for (const auto& f : files) traces.push_back(load_trace(f));
    std::unique_ptr<Oracle> judge;
    if (!a.judge.endpoint.url.empty()) judge = std::make_unique<RemoteOracle>(a.judge.endpoint);
    const auto report = metrics_from_traces(traces, a.gamma_s, judge.get(), "traces");
    std::printf("%s\n", report.summary_line().c_str());
    if (!a.out.empty()) write_text(a.out, report.to_jsonl());
    return 0;
}

struct RenderArgs {
    Common common;
    OracleOptions oracle;
    std::string trace;
    std::string out = "render";
    int scale = 4;
};

int cmd_render(const RenderArgs& a) {
    const EpisodeTrace recorded = load_trace(a.trace);
    fs::create_directories(a.out);
    std::vector<Pose> path;
    Map2D last;
    int written = 0;
    rerun(recorded, a.common, a.oracle, [&](const StepArtifacts& s) {
        char name[64];
        std::snprintf(name, sizeof name, "step_%03d.png", s.step);
        write_png(s.annotated ? *s.annotated : s.observation->rgb, fs::path(a.out) / name);
        path.push_back(s.observation->pose);
        last = *s.map;
        ++written;
    });
    write_png(render_map(last, path, a.scale), fs::path(a.out) / "map.png");
    write_pgm(last.nx(), last.ny(), map_gray(last), fs::path(a.out) / "map.pgm");
    write_text(fs::path(a.out) / "trajectory.csv", trajectory_csv(path));
    std::printf("wrote %d step images, map.png, map.pgm and trajectory.csv to %s\n", written, a.out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Memory-centric embodied question answering in a gridworld"};
    app.require_subcommand(1);

    RunArgs run;
    auto* c_run = app.add_subcommand("run", "run episodes and write traces and a report");
    add_common(c_run, run.common);
    add_oracle_options(c_run, run.oracle);
    c_run->add_option("--scene", run.scene, "scene name or .json path");
    c_run->add_option("--questions", run.questions, "question file (default: <data>/questions/suite.json)")
        ->check(CLI::ExistingFile);
    c_run->add_option("--question", run.ids, "question id; repeatable");
    c_run->add_option("--flags", run.flags, "memory injection: None, S, S+A, S+A+P, ...")->capture_default_str();
    c_run->add_option("--spawn", run.spawn, "spawn index");
    c_run->add_option("--bank", run.bank, "memory bank directory to load")->check(CLI::ExistingDirectory);
    c_run->add_option("--save-bank", run.save_bank, "directory to persist the episode memory to");
    c_run->add_option("--out", run.out, "output directory")->capture_default_str();

    ReplayArgs replay;
    auto* c_replay = app.add_subcommand("replay", "re-run a trace and check it reproduces byte for byte");
    add_common(c_replay, replay.common);
    add_oracle_options(c_replay, replay.oracle);
    c_replay->add_option("trace", replay.trace, "trace file")->required()->check(CLI::ExistingFile);

    AblateArgs abl;
    auto* c_ablate = app.add_subcommand("ablate", "compare memory injection settings with the scripted oracle");
    add_common(c_ablate, abl.common);
    c_ablate->add_option("--questions", abl.questions, "question file")->check(CLI::ExistingFile);
    c_ablate->add_option("--flags", abl.flags, "flag sets to compare")->delimiter(',')->capture_default_str();
    c_ablate->add_option("--out", abl.out, "output directory")->capture_default_str();
    c_ablate->add_option("--workers", abl.workers, "concurrent episodes")->check(CLI::PositiveNumber);

    MetricsArgs met;
    auto* c_metrics = app.add_subcommand("metrics", "aggregate trace files into a report");
    c_metrics->add_option("inputs", met.inputs, "trace files or directories")->required()->check(CLI::ExistingPath);
    c_metrics->add_option("--out", met.out, "report path (JSON lines)");
    c_metrics->add_option("--gamma-s", met.gamma_s, "step normalization ratio")->capture_default_str();
    c_metrics->add_option("--judge-url", met.judge.endpoint.url, "judge endpoint; enables the judge score");
    c_metrics->add_option("--judge-token-env", met.judge.endpoint.token_env, "environment variable with the judge token");

    RenderArgs ren;
    auto* c_render = app.add_subcommand("render", "write per-step views, the final map and the trajectory");
    add_common(c_render, ren.common);
    add_oracle_options(c_render, ren.oracle);
    c_render->add_option("trace", ren.trace, "trace file")->required()->check(CLI::ExistingFile);
    c_render->add_option("--out", ren.out, "output directory")->capture_default_str();
    c_render->add_option("--scale", ren.scale, "pixels per map cell")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (c_run->parsed()) return cmd_run(run);
        if (c_replay->parsed()) return cmd_replay(replay);
        if (c_ablate->parsed()) return cmd_ablate(abl);
        if (c_metrics->parsed()) return cmd_metrics(met);
        if (c_render->parsed()) return cmd_render(ren);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}
