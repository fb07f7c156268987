#include "meqa/agent.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <queue>
#include <sstream>

#include "meqa/update_gate.hpp"

namespace meqa {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = std::numbers::pi;
// Floor closer than this lies below the explored-marking window of the camera;
// the agent treats it as known once it has stood there.
constexpr double kSelfRadius = 1.0;
constexpr double kBumpRadius = 0.15;

void mark_surroundings(VoxelGrid& grid, Vec2 center, double radius, double below_height) {
    clear_around(grid, center, radius, below_height);
    for (int ix = 0; ix < grid.nx(); ++ix)
        for (int iy = 0; iy < grid.ny(); ++iy) {
            if ((grid.voxel_center(ix, iy, 0).xy() - center).norm() > radius) continue;
            for (int iz = 0; iz < grid.nz(); ++iz) grid.at(ix, iy, iz).explored = true;
        }
}

}  // namespace

// ---------------------------------------------------------------------------
// Flags

AblationFlags AblationFlags::parse(const std::string& text) {
    AblationFlags f{false, false, false};
    if (text == "None" || text == "none" || text.empty()) return f;
    std::istringstream in(text);
    std::string part;
    while (std::getline(in, part, '+')) {
        if (part == "S") f.stop = true;
        else if (part == "A") f.answer = true;
        else if (part == "P") f.planner = true;
        else throw InvalidArgument("unknown ablation flag '" + part + "' in '" + text + "' (expected S, A, P or None)");
    }
    return f;
}

std::string AblationFlags::name() const {
    std::string out;
    if (stop) out += "S";
    if (answer) out += out.empty() ? "A" : "+A";
    if (planner) out += out.empty() ? "P" : "+P";
    return out.empty() ? "None" : out;
}

// ---------------------------------------------------------------------------
// Planner injection

namespace {

bool projects_into_view(const Pose& pose, const CameraModel& cam, Vec2 p) {
    const auto px = cam.project(pose, {p.x, p.y, 0.0});
    return px && px->u >= 0.0 && px->v >= 0.0 && px->u < cam.width && px->v < cam.height_px;
}

}  // namespace

std::vector<Frontier> in_view(const std::vector<Frontier>& frontiers, const Pose& pose, const CameraModel& cam) {
    std::vector<Frontier> out = frontiers;
    for (auto& f : out)
        std::erase_if(f.candidate_poses, [&](const Pose& p) { return !projects_into_view(pose, cam, p.xy()); });
    return out;
}

std::vector<LabeledCandidate> label_candidates(const CandidateSet& set, const Pose& pose, const CameraModel& cam) {
    std::vector<LabeledCandidate> out;
    for (const auto& c : set.candidates) {
        if (!projects_into_view(pose, cam, c.pose.xy())) continue;
        if (out.size() >= 26) break;
        const auto px = cam.project(pose, {c.pose.position.x, c.pose.position.y, 0.0});
        out.push_back({static_cast<char>('A' + out.size()), c, *px});
    }
    return out;
}

RgbImage annotate_observation(const RgbImage& rgb, const std::vector<LabeledCandidate>& labels, int circle_radius) {
    RgbImage out = rgb;
    const int r = std::max(4, circle_radius * rgb.width() / 640);
    for (const auto& l : labels) {
        const int cx = static_cast<int>(std::floor(l.pixel.u)), cy = static_cast<int>(std::floor(l.pixel.v));
        draw_circle(out, cx, cy, r, {255, 255, 255}, true);
        draw_circle(out, cx, cy, r, {0, 0, 0}, false);
        const int scale = r >= 10 ? 2 : 1;
        draw_letter(out, cx - 2 * scale, cy - 3 * scale, l.letter, {0, 0, 0}, scale);
    }
    return out;
}

double SemanticWeight::score(const Frontier& f) const {
    if (field.empty()) return 0.0;
    double best = 0.0;
    for (const Cell c : f.cells)
        if (c.x >= 0 && c.y >= 0 && c.x < nx && c.y < ny) best = std::max(best, at(c));
    return best;
}

SemanticWeight splat_weight(const Map2D& map, const std::vector<Frontier>& frontiers, int frontier, double sigma) {
    SemanticWeight w;
    w.nx = map.nx();
    w.ny = map.ny();
    w.chosen_frontier = frontier;
    w.field.assign(static_cast<std::size_t>(w.nx) * w.ny, 0.0);
    if (frontier < 0 || frontier >= static_cast<int>(frontiers.size())) return w;
    for (const Cell c : frontiers[static_cast<std::size_t>(frontier)].cells)
        if (map.in_bounds(c)) w.field[static_cast<std::size_t>(c.y) * w.nx + c.x] = 1.0;
    if (!(sigma > 0.0)) return w;

    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double ksum = 0.0;
    for (int i = -radius; i <= radius; ++i) ksum += kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (double& k : kernel) k /= ksum;

    std::vector<double> tmp(w.field.size(), 0.0);
    for (int y = 0; y < w.ny; ++y)
        for (int x = 0; x < w.nx; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int xx = x + i;
                if (xx >= 0 && xx < w.nx) s += kernel[static_cast<std::size_t>(i + radius)] * w.field[static_cast<std::size_t>(y) * w.nx + xx];
            }
            tmp[static_cast<std::size_t>(y) * w.nx + x] = s;
        }
    for (int y = 0; y < w.ny; ++y)
        for (int x = 0; x < w.nx; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int yy = y + i;
                if (yy >= 0 && yy < w.ny) s += kernel[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(yy) * w.nx + x];
            }
            w.field[static_cast<std::size_t>(y) * w.nx + x] = s;
        }
    return w;
}

namespace {

int nearest_frontier(const std::vector<Frontier>& frontiers, Vec2 p) {
    int best = -1;
    double best_d = kInf;
    for (std::size_t i = 0; i < frontiers.size(); ++i) {
        const double d = (frontiers[i].centroid - p).norm();
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(i);
        }
    }
    return best;
}

}  // namespace

PlannerInjection inject_planner(Oracle& oracle, const Question& question, const Observation& obs,
                                const ImageMeta& meta, const std::vector<Frontier>& frontiers,
                                const CandidateSet& candidates, const Map2D& map, const std::string& context,
                                const HyperParams& params) {
    if (candidates.candidates.empty()) throw InvalidArgument("inject_planner needs at least one candidate");
    PlannerInjection r;
    r.labels = label_candidates(candidates, obs.pose, params.camera);
    r.annotated = annotate_observation(obs.rgb, r.labels, params.visual_prompt.circle_radius);

    int frontier = -1;
    if (!r.labels.empty()) {
        ImageHandle handle{"annotated", r.annotated, meta};
        for (const auto& l : r.labels) handle.meta.candidates[l.letter] = l.candidate.pose.xy();
        r.direction = choose_direction(oracle, question, handle, static_cast<int>(r.labels.size()), context);
        if (r.direction.letter) {
            const auto pick = static_cast<std::size_t>(*r.direction.letter - 'A');
            frontier = r.labels[pick].candidate.frontier;
            r.weight = splat_weight(map, frontiers, frontier, params.planner.smooth_sigma);
            r.weight.one_hot.assign(r.labels.size(), 0.0);
            r.weight.one_hot[pick] = 1.0;
            return r;
        }
    } else {
        r.direction.warnings.push_back("no candidate projects into the view");
    }
    r.weight = splat_weight(map, frontiers, nearest_frontier(frontiers, obs.pose.xy()), params.planner.smooth_sigma);
    r.weight.fallback = true;
    return r;
}

// ---------------------------------------------------------------------------
// Stop and answer

StopDecision stop_criterion(Oracle& oracle, const Question& question, const std::string& context,
                            const ImageHandle& image, int step, int max_steps, double gamma) {
    StopDecision d;
    d.confidence = confidence(oracle, question, context, image);
    d.stop = d.confidence.value >= gamma;
    if (step >= max_steps - 1) {
        d.forced = !d.stop;
        d.stop = true;
    }
    return d;
}

AnswerResult answer(Oracle& oracle, const Question& question, const std::string& context, const std::string& state_line,
                    const ImageHandle& image) {
    std::string ctx = context;
    if (!state_line.empty()) ctx += (ctx.empty() || ctx.back() == '\n' ? "" : "\n") + state_line + "\n";
    return answer_question(oracle, question, ctx, image);
}

// ---------------------------------------------------------------------------
// Planning

bool Reachability::reachable(Cell c) const {
    return c.x >= 0 && c.y >= 0 && c.x < nx && c.y < ny && std::isfinite(distance(c));
}

std::vector<Cell> Reachability::path_to(Cell c) const {
    std::vector<Cell> path;
    if (!reachable(c)) return path;
    for (int i = c.y * nx + c.x; i >= 0; i = parent[static_cast<std::size_t>(i)]) path.push_back({i % nx, i / nx});
    std::reverse(path.begin(), path.end());
    return path;
}

Reachability reachability(const Map2D& map, Vec2 from) {
    Reachability r;
    r.nx = map.nx();
    r.ny = map.ny();
    r.dist.assign(static_cast<std::size_t>(r.nx) * r.ny, kInf);
    r.parent.assign(r.dist.size(), -1);
    if (map.empty()) return r;

    // Start at the agent cell, or the nearest traversable cell within a few cells.
    Cell start = map.world_to_cell(from);
    if (!map.in_bounds(start) || !map.traversable(start)) {
        std::optional<Cell> best;
        double best_d = kInf;
        for (int dy = -3; dy <= 3; ++dy)
            for (int dx = -3; dx <= 3; ++dx) {
                const Cell c{start.x + dx, start.y + dy};
                if (!map.in_bounds(c) || !map.traversable(c)) continue;
                const double d = std::hypot(dx, dy);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
        if (!best) return r;
        start = *best;
    }
    r.start = start;

    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    const int s = start.y * r.nx + start.x;
    r.dist[static_cast<std::size_t>(s)] = 0.0;
    queue.push({0.0, s});
    while (!queue.empty()) {
        const auto [d, i] = queue.top();
        queue.pop();
        if (d > r.dist[static_cast<std::size_t>(i)]) continue;
        const int x = i % r.nx, y = i / r.nx;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (dx == 0 && dy == 0) continue;
                const Cell n{x + dx, y + dy};
                if (!map.in_bounds(n) || !map.traversable(n)) continue;
                // No corner cutting past blocked cells.
                if (dx != 0 && dy != 0 && (!map.traversable({x + dx, y}) || !map.traversable({x, y + dy}))) continue;
                const double nd = d + (dx != 0 && dy != 0 ? std::numbers::sqrt2 : 1.0);
                const int j = n.y * r.nx + n.x;
                if (nd < r.dist[static_cast<std::size_t>(j)]) {
                    r.dist[static_cast<std::size_t>(j)] = nd;
                    r.parent[static_cast<std::size_t>(j)] = i;
                    queue.push({nd, j});
                }
            }
    }
    return r;
}

namespace {

bool line_of_sight(const Map2D& map, Vec2 a, Vec2 b) {
    const double len = (b - a).norm();
    const int n = std::max(1, static_cast<int>(std::ceil(len / (0.5 * map.resolution()))));
    for (int i = 0; i <= n; ++i) {
        const Vec2 p = a + (b - a) * (static_cast<double>(i) / n);
        if ((p - a).norm() < 0.5 * map.resolution()) continue;
        const Cell c = map.world_to_cell(p);
        if (!map.in_bounds(c) || !map.traversable(c)) return false;
    }
    return true;
}

}  // namespace

std::string decision_label(const Pose& from, const Pose& to) {
    const Vec2 d = to.xy() - from.xy();
    const double dist = d.norm();
    if (dist < 1e-9) {
        const double turn = wrap_angle(to.yaw - from.yaw);
        char buf[64];
        std::snprintf(buf, sizeof buf, "turn %s %.0f deg", turn >= 0 ? "left" : "right", std::abs(turn) * 180.0 / kPi);
        return buf;
    }
    const double rel = wrap_angle(std::atan2(d.y, d.x) - from.yaw);
    static const char* names[] = {"forward", "forward-left", "left", "backward-left",
                                  "backward", "backward-right", "right", "forward-right"};
    int sector = static_cast<int>(std::lround(rel / (kPi / 4.0)));
    sector = ((sector % 8) + 8) % 8;
    char buf[64];
    std::snprintf(buf, sizeof buf, "move %s %.1f m", names[sector], dist);
    return buf;
}

PlanResult plan_next(const Pose& pose, const Map2D& map, const std::vector<Frontier>& frontiers,
                     const SemanticWeight& weight, const HyperParams& params) {
    PlanResult result;
    const auto& pp = params.planner;
    const Reachability reach = reachability(map, pose.xy());
    if (reach.dist.empty()) return result;

    struct Option {
        int frontier;
        Cell cell;
        double path;
        double score;
    };
    std::vector<Option> options;
    for (std::size_t fi = 0; fi < frontiers.size(); ++fi) {
        std::optional<Cell> best;
        double best_d = kInf;
        for (const Cell c : frontiers[fi].cells) {
            if (!reach.reachable(c)) continue;
            if ((map.cell_center(c) - pose.xy()).norm() < pp.min_dist_from_cur) continue;
            const double d = reach.distance(c);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        if (best) options.push_back({static_cast<int>(fi), *best, best_d, weight.score(frontiers[fi])});
    }
    if (options.empty()) return result;

    const Option* pick = nullptr;
    const bool chosen_reachable =
        std::any_of(options.begin(), options.end(), [&](const Option& o) { return o.frontier == weight.chosen_frontier; });
    if (weight.chosen_frontier >= 0 && !chosen_reachable &&
        weight.chosen_frontier < static_cast<int>(frontiers.size())) {
        const Vec2 dir = frontiers[static_cast<std::size_t>(weight.chosen_frontier)].centroid - pose.xy();
        for (const auto& o : options) {
            const Vec2 off = frontiers[static_cast<std::size_t>(o.frontier)].centroid - pose.xy();
            if (off.x * dir.x + off.y * dir.y <= 0.0) continue;
            if (!pick || o.path < pick->path) pick = &o;
        }
        result.half_plane = pick != nullptr;
    }
    if (!pick) {
        for (const auto& o : options) {
            if (!pick || o.score > pick->score + 1e-12 ||
                (std::abs(o.score - pick->score) <= 1e-12 && o.path < pick->path))
                pick = &o;
        }
    }
    result.frontier = pick->frontier;

    // Farthest in-band path cell in straight-line sight.
    const auto path = reach.path_to(pick->cell);
    Vec2 nav = map.cell_center(path.front());
    for (const Cell c : path) {
        const Vec2 p = map.cell_center(c);
        const double d = (p - pose.xy()).norm();
        if (d > pp.max_dist_from_cur) continue;
        if (line_of_sight(map, pose.xy(), p)) nav = p;
    }
    const Vec2 goal = map.cell_center(pick->cell);
    const Vec2 look = goal - pose.xy();
    const double yaw = look.norm() > 1e-9 ? std::atan2(look.y, look.x) : pose.yaw;
    result.target = Pose(nav.x, nav.y, yaw);
    result.decision = decision_label(pose, *result.target);
    return result;
}

// ---------------------------------------------------------------------------
// Traces

namespace {

json pose_json(const Pose& p) { return json::array({p.position.x, p.position.y, p.yaw}); }

Pose pose_from(const json& j) { return Pose(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()); }

template <typename T>
json opt(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

json letter_json(const std::optional<char>& c) { return c ? json(std::string(1, *c)) : json(nullptr); }

std::optional<char> letter_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    const auto s = j.get<std::string>();
    if (s.size() != 1) throw ValidationError("trace letter field must be one character");
    return s[0];
}

}  // namespace

std::string EpisodeTrace::to_jsonl() const {
    std::string out;
    json header = {{"kind", "episode"},
                   {"scene", scene},
                   {"question_id", question_id},
                   {"question", question},
                   {"question_spec", question_json},
                   {"config", config_yaml},
                   {"flags", flags},
                   {"seed", seed},
                   {"spawn", spawn},
                   {"max_steps", max_steps},
                   {"scene_id", scene_id},
                   {"retrieved_scene", opt(retrieved_scene)},
                   {"bank", bank}};
    out += header.dump() + "\n";
    for (const auto& s : steps) {
        json j = {{"kind", "step"},
                  {"step", s.step},
                  {"pose", pose_json(s.pose)},
                  {"observation", s.observation_ref},
                  {"detections", s.detections},
                  {"memory_updated", s.memory_updated},
                  {"max_similarity", s.max_similarity},
                  {"retrieval",
                   {{"k", s.retrieval.k},
                    {"entropy", s.retrieval.entropy},
                    {"indices", s.retrieval.indices},
                    {"similarities", s.retrieval.similarities}}},
                  {"context", {{"stop", s.stop_context}, {"answer", s.answer_context}, {"planner", s.planner_context}}},
                  {"confidence", letter_json(s.confidence)},
                  {"decision", s.decision},
                  {"next_pose", s.next_pose ? pose_json(*s.next_pose) : json(nullptr)},
                  {"move", s.move_label},
                  {"direction", letter_json(s.direction)},
                  {"candidates", s.candidates},
                  {"answer", opt(s.answer)},
                  {"warnings", s.warnings}};
        out += j.dump() + "\n";
    }
    json result = {{"kind", "result"},   {"answer", opt(answer)},         {"gold", gold},
                   {"correct", correct}, {"steps", num_steps()},          {"stop_reason", stop_reason},
                   {"floor_area", floor_area}};
    out += result.dump() + "\n";
    return out;
}

EpisodeTrace EpisodeTrace::from_jsonl(const std::string& text) {
    EpisodeTrace t;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    bool header = false, result = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            const auto kind = j.at("kind").get<std::string>();
            if (kind == "episode") {
                header = true;
                t.scene = j.at("scene");
                t.question_id = j.at("question_id");
                t.question = j.at("question");
                t.question_json = j.at("question_spec");
                t.config_yaml = j.at("config");
                t.flags = j.at("flags");
                t.seed = j.at("seed");
                t.spawn = j.at("spawn");
                t.max_steps = j.at("max_steps");
                t.scene_id = j.at("scene_id");
                if (!j.at("retrieved_scene").is_null()) t.retrieved_scene = j.at("retrieved_scene").get<int>();
                t.bank = j.at("bank");
            } else if (kind == "step") {
                StepRecord s;
                s.step = j.at("step");
                s.pose = pose_from(j.at("pose"));
                s.observation_ref = j.at("observation");
                s.detections = j.at("detections").get<std::vector<int>>();
                s.memory_updated = j.at("memory_updated");
                s.max_similarity = j.at("max_similarity");
                const auto& r = j.at("retrieval");
                s.retrieval.k = r.at("k");
                s.retrieval.entropy = r.at("entropy");
                s.retrieval.indices = r.at("indices").get<std::vector<std::int64_t>>();
                s.retrieval.similarities = r.at("similarities").get<std::vector<double>>();
                const auto& c = j.at("context");
                s.stop_context = c.at("stop").get<std::vector<std::int64_t>>();
                s.answer_context = c.at("answer").get<std::vector<std::int64_t>>();
                s.planner_context = c.at("planner").get<std::vector<std::int64_t>>();
                s.confidence = letter_from(j.at("confidence"));
                s.decision = j.at("decision");
                if (!j.at("next_pose").is_null()) s.next_pose = pose_from(j.at("next_pose"));
                s.move_label = j.at("move");
                s.direction = letter_from(j.at("direction"));
                s.candidates = j.at("candidates");
                if (!j.at("answer").is_null()) s.answer = j.at("answer").get<std::string>();
                s.warnings = j.at("warnings").get<std::vector<std::string>>();
                t.steps.push_back(std::move(s));
            } else if (kind == "result") {
                result = true;
                if (!j.at("answer").is_null()) t.answer = j.at("answer").get<std::string>();
                t.gold = j.at("gold");
                t.correct = j.at("correct");
                t.stop_reason = j.at("stop_reason");
                t.floor_area = j.at("floor_area");
                if (j.at("steps").get<int>() != t.num_steps())
                    throw ValidationError("result step count does not match the step records");
            } else {
                throw ValidationError("unknown record kind '" + kind + "'");
            }
        } catch (const json::exception& e) {
            throw ValidationError("trace line " + std::to_string(line_no) + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError("trace line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!header) throw ValidationError("trace has no episode header");
    if (!result) throw ValidationError("trace has no result record");
    return t;
}

void save_trace(const EpisodeTrace& trace, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw PersistenceError("cannot write trace " + path.string());
    f << trace.to_jsonl();
    if (!f) throw PersistenceError("failed writing trace " + path.string());
}

EpisodeTrace load_trace(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot open trace " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return EpisodeTrace::from_jsonl(ss.str());
}

// ---------------------------------------------------------------------------
// Episodes

int max_steps_for(const Scene& scene, const HyperParams& params) {
    const double area = scene.floor_area();
    return std::max(1, static_cast<int>(std::ceil(params.navigation.max_step_room_size_ratio * std::sqrt(area) - 1e-9)));
}

namespace {

struct Context {
    std::string text;
    std::vector<std::int64_t> indices;
};

Context memory_context(const RetrievalResult& retrieved) {
    Context c;
    for (const auto& m : retrieved.items) {
        c.indices.push_back(m.index);
        c.text += "[memory " + std::to_string(m.index) + "]\n" + canonical_text(m.payload);
    }
    return c;
}

void upsert_target(MemoryStore& store, int scene_id, const Encoder& encoder, const TargetAnnotation& target) {
    const auto match = store.read([&](const std::vector<VectorRecord>& records) -> std::optional<VectorRecord> {
        for (const auto& r : records) {
            if (r.superseded || r.scene_id != scene_id) continue;
            const auto* g = std::get_if<GlobalMemoryEntry>(&r.payload);
            if (!g || g->kind != GlobalMemoryEntry::Kind::target) continue;
            const auto& t = *g->target;
            if (t.category == target.category && (t.position.xy() - target.position.xy()).norm() < 0.3) return r;
        }
        return std::nullopt;
    });
    if (match) {
        const auto& t = *std::get<GlobalMemoryEntry>(match->payload).target;
        if (t.description == target.description && t.position == target.position) return;
        store.supersede(match->index);
    }
    store.insert(GlobalMemoryEntry::make_target(target), scene_id, encoder);
}

void upsert_room(MemoryStore& store, int scene_id, const Encoder& encoder, const RoomAnnotation& room) {
    const bool known = store.read([&](const std::vector<VectorRecord>& records) {
        return std::any_of(records.begin(), records.end(), [&](const VectorRecord& r) {
            if (r.superseded || r.scene_id != scene_id) return false;
            const auto* g = std::get_if<GlobalMemoryEntry>(&r.payload);
            return g && g->kind == GlobalMemoryEntry::Kind::room && g->room->category == room.category;
        });
    });
    if (!known) store.insert(GlobalMemoryEntry::make_room(room), scene_id, encoder);
}

double init_turn(std::uint64_t seed, int step) {
    std::uint64_t state = seed ^ (0x7A3Bull + static_cast<std::uint64_t>(step) * 0x9E37ull);
    const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    return 2.0 * kPi / 3.0 + (u - 0.5) * kPi / 6.0;
}

}  // namespace

EpisodeResult run_episode(const Scene& scene, const Question& question, const HyperParams& params, Oracle& oracle,
                          const Encoder& encoder, EpisodeOptions options) {
    params.validate();
    question.validate();
    if (options.spawn < 0 || options.spawn >= static_cast<int>(scene.spawns.size()))
        throw InvalidArgument("spawn index " + std::to_string(options.spawn) + " out of range for scene " + scene.name);
    if (encoder.dim() * 2 != params.retrieval.dim)
        throw InvalidArgument("retrieval dim must be twice the encoder dim");

    EpisodeResult out{{}, MemoryStore(encoder.dim())};
    EpisodeTrace& trace = out.trace;
    trace.scene = scene.name;
    trace.question_id = question.id;
    trace.question = question.prompt_text();
    trace.question_json = question_to_json(question);
    trace.config_yaml = dump_config(params);
    trace.flags = options.flags.name();
    trace.seed = params.seed;
    trace.spawn = options.spawn;
    trace.max_steps = max_steps_for(scene, params);
    trace.gold = question.answer;
    trace.floor_area = scene.floor_area();
    trace.bank = options.bank_path;

    // Global memory is in place before the first step.
    const bool have_bank = options.bank.has_value();
    if (have_bank) {
        if (options.bank->dim() != encoder.dim()) throw InvalidArgument("memory bank dimension does not match the encoder");
        out.store = std::move(*options.bank);
    }
    MemoryStore& store = out.store;
    const auto known_scenes = store.scene_ids();
    trace.scene_id = known_scenes.empty() ? 0 : *std::max_element(known_scenes.begin(), known_scenes.end()) + 1;

    const CameraModel& cam = params.camera;
    Pose pose = scene.spawns[static_cast<std::size_t>(options.spawn)];
    VoxelGrid grid = VoxelGrid::around(pose.xy(), 4.0, params.mapping);
    clear_around(grid, pose.xy(), params.navigation.init_clearance, cam.height);
    ObservationCache cache;
    std::vector<Vec2> bumps;  // where straight-line moves were stopped short
    const auto f_text = encoder.encode_text(question.prompt_text());

    for (int step = 0; step < trace.max_steps; ++step) {
        StepRecord rec;
        rec.step = step;
        rec.pose = pose;
        rec.observation_ref = "step_" + std::to_string(step);

        const Observation obs = render(scene, pose, cam);
        mark_surroundings(grid, pose.xy(), kSelfRadius, cam.height);
        integrate_depth(grid, obs.depth, pose, cam);
        Map2D map = project_to_2d(grid, cam);
        for (const Vec2 b : bumps) {
            const Cell c = map.world_to_cell(b);
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const Cell n{c.x + dx, c.y + dy};
                    if (map.in_bounds(n) && (map.cell_center(n) - b).norm() <= kBumpRadius)
                        map.set(n, false, map.explored(n), true);
                }
        }

        ImageMeta meta;
        meta.pose = pose;
        for (const auto& d : obs.detections) {
            meta.visible_objects.push_back(d.object_id);
            rec.detections.push_back(d.object_id);
        }
        const ImageHandle view{rec.observation_ref, obs.rgb, meta};

        // Detector and captions.
        std::vector<DetectionRecord> detections;
        for (const auto& d : obs.detections) {
            ImageMeta crop_meta;
            crop_meta.object_id = d.object_id;
            const auto cap = describe_object(oracle, {rec.observation_ref + "_obj" + std::to_string(d.object_id),
                                                      obs.rgb.crop(d.x0, d.y0, d.x1, d.y1), crop_meta});
            for (const auto& w : cap.warnings) rec.warnings.push_back(w);
            if (!cap.ok || cap.caption.category.empty()) continue;
            detections.push_back({cap.caption, d.x0, d.y0, d.x1, d.y1});
            upsert_target(store, trace.scene_id, encoder,
                          {d.position, cap.caption.category, cap.caption.description, pose});
        }
        const auto scene_cap = describe_scene(oracle, view);
        for (const auto& w : scene_cap.warnings) rec.warnings.push_back(w);

        const auto f_obs = encoder.encode_image(obs.rgb);
        if (step == 0 && have_bank) {
            trace.retrieved_scene = scene_retrieve(store, f_obs, params.retrieval);
            if (trace.retrieved_scene) trace.scene_id = *trace.retrieved_scene;
        }
        if (!scene_cap.caption.room.empty())
            upsert_room(store, trace.scene_id, encoder, {scene_cap.caption.room, pose.position});

        // Local memory update.
        const auto gate = should_update(pose, obs.rgb, f_obs, store, trace.scene_id, params.update, cache);
        rec.max_similarity = gate.max_similarity;
        if (gate.update) {
            const std::string space = scene_cap.caption.room.empty() ? "unknown" : "in the " + scene_cap.caption.room;
            const std::string arrived = step == 0 ? "start" : trace.steps.back().move_label;
            auto entry = build_local_entry(rec.observation_ref, detections,
                                           scene_cap.ok ? std::optional<SceneCaption>(scene_cap.caption) : std::nullopt,
                                           step, arrived, pose, space);
            store.insert(std::move(entry), trace.scene_id, encoder, &obs.rgb);
            cache.put(rec.observation_ref, obs.rgb, f_obs);
            rec.memory_updated = true;
        }

        // Retrieval, shared by the modules that take memory.
        RetrievalResult retrieved;
        if (params.retrieval.use_rag) {
            retrieved = content_retrieve(store, trace.scene_id, fuse_query(f_obs, f_text), params.retrieval);
            rec.retrieval.k = retrieved.k;
            rec.retrieval.entropy = retrieved.entropy;
            for (const auto& m : retrieved.items) {
                rec.retrieval.indices.push_back(m.index);
                rec.retrieval.similarities.push_back(m.similarity);
            }
        }
        const Context memories = memory_context(retrieved);
        const Context none;
        const Context& stop_ctx = options.flags.stop ? memories : none;
        const Context& answer_ctx = options.flags.answer ? memories : none;
        const Context& planner_ctx = options.flags.planner ? memories : none;

        const RgbImage* annotated = nullptr;
        PlannerInjection injection;
        auto finish = [&](const std::string& reason) {
            rec.decision = "answer";
            rec.answer_context = answer_ctx.indices;
            char buf[128];
            std::snprintf(buf, sizeof buf, "state: step %d at (%.1f, %.1f) facing %.0f deg", step, pose.position.x,
                          pose.position.y, pose.yaw * 180.0 / kPi);
            const auto a = answer(oracle, question, answer_ctx.text, buf, view);
            for (const auto& w : a.warnings) rec.warnings.push_back(w);
            rec.answer = a.answer;
            trace.answer = a.answer;
            trace.correct = a.answer && *a.answer == question.answer;
            trace.stop_reason = reason;
        };

        const bool last = step >= trace.max_steps - 1;
        if (step < params.navigation.min_random_init_steps && !last) {
            const Pose turned(pose.position, pose.yaw + init_turn(params.seed, step));
            rec.decision = "move";
            rec.move_label = decision_label(pose, turned);
            rec.next_pose = move(scene, pose, turned, params.navigation.collision_margin);
        } else {
            rec.stop_context = stop_ctx.indices;
            const auto stop = stop_criterion(oracle, question, stop_ctx.text, view, step, trace.max_steps,
                                             params.stop.gamma);
            rec.confidence = stop.confidence.letter;
            for (const auto& w : stop.confidence.warnings) rec.warnings.push_back(w);
            if (stop.stop) {
                finish(stop.forced ? "max_steps" : "confident");
            } else {
                const auto frontiers = detect_frontiers(map, params);
                const auto candidates = sample_candidates(in_view(frontiers, pose, cam), pose, params);
                SemanticWeight weight;
                if (!candidates.candidates.empty()) {
                    rec.planner_context = planner_ctx.indices;
                    injection = inject_planner(oracle, question, obs, meta, frontiers, candidates, map,
                                               planner_ctx.text, params);
                    annotated = &injection.annotated;
                    weight = injection.weight;
                    rec.direction = injection.direction.letter;
                    rec.candidates = static_cast<int>(injection.labels.size());
                    for (const auto& w : injection.direction.warnings) rec.warnings.push_back(w);
                }
                const auto plan = plan_next(pose, map, frontiers, weight, params);
                if (!plan.target) {
                    finish("exhausted");
                } else {
                    if (plan.half_plane) rec.warnings.push_back("chosen frontier unreachable, used its half-plane");
                    rec.decision = "move";
                    rec.move_label = plan.decision;
                    rec.next_pose = move(scene, pose, *plan.target, params.navigation.collision_margin);
                    const Vec2 want = plan.target->xy() - pose.xy();
                    const double got = (rec.next_pose->xy() - pose.xy()).norm();
                    if (want.norm() > 1e-9 && got < want.norm() - 1e-6) {
                        const Vec2 dir = want * (1.0 / want.norm());
                        bumps.push_back(rec.next_pose->xy() + dir * (params.navigation.collision_margin + 0.05));
                    }
                }
            }
        }

        if (options.on_step) options.on_step({step, &obs, annotated, &map});
        trace.steps.push_back(std::move(rec));
        if (trace.steps.back().decision == "answer") break;
        pose = *trace.steps.back().next_pose;
    }
    return out;
}

}  // namespace meqa
