#include "meqa/simulator.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "meqa/errors.hpp"

namespace meqa {

using nlohmann::json;

std::optional<Rgb> palette_color(const std::string& name) {
    static const std::map<std::string, Rgb> palette = {
        {"white", {235, 235, 230}}, {"red", {200, 40, 40}},     {"yellow", {230, 200, 40}},
        {"blue", {40, 70, 200}},    {"green", {50, 160, 60}},   {"brown", {130, 80, 40}},
        {"gray", {128, 128, 128}},  {"orange", {235, 130, 30}}, {"purple", {130, 50, 160}},
        {"pink", {235, 150, 180}},  {"black", {40, 40, 40}},    {"beige", {215, 195, 160}},
    };
    const auto it = palette.find(name);
    if (it == palette.end()) return std::nullopt;
    return it->second;
}

namespace {

bool rects_overlap(Vec2 amin, Vec2 amax, Vec2 bmin, Vec2 bmax) {
    return amin.x < bmax.x && bmin.x < amax.x && amin.y < bmax.y && bmin.y < amax.y;
}

}  // namespace

// ---------------------------------------------------------------------------
// Scene

CellType Scene::cell(int x, int y) const {
    if (!in_bounds(x, y)) return CellType::empty;
    return cells[static_cast<std::size_t>(y) * nx + x];
}

void Scene::world_to_cell(Vec2 p, int& x, int& y) const {
    x = static_cast<int>(std::floor((p.x - origin.x) / resolution));
    y = static_cast<int>(std::floor((p.y - origin.y) / resolution));
}

bool Scene::blocked(Vec2 p) const {
    int x, y;
    world_to_cell(p, x, y);
    if (cell(x, y) != CellType::floor) return true;
    for (const auto& o : objects) {
        const Vec2 lo = o.min(), hi = o.max();
        if (p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y) return true;
    }
    return false;
}

bool Scene::blocked_cell(int x, int y) const {
    if (cell(x, y) != CellType::floor) return true;
    const Vec2 lo{origin.x + x * resolution, origin.y + y * resolution};
    const Vec2 hi{lo.x + resolution, lo.y + resolution};
    for (const auto& o : objects)
        if (rects_overlap(lo, hi, o.min(), o.max())) return true;
    return false;
}

const Room* Scene::room_at(Vec2 p) const {
    for (const auto& r : rooms)
        if (r.contains(p)) return &r;
    return nullptr;
}

const SceneObject* Scene::object(int id) const {
    for (const auto& o : objects)
        if (o.id == id) return &o;
    return nullptr;
}

double Scene::floor_area() const {
    const auto n = std::count(cells.begin(), cells.end(), CellType::floor);
    return static_cast<double>(n) * resolution * resolution;
}

void Scene::validate() const {
    if (name.empty()) throw ValidationError("name: scene name must be non-empty");
    if (!(resolution > 0.0)) throw ValidationError("resolution: must be positive");
    if (nx <= 0 || ny <= 0) throw ValidationError("size: must be positive");
    if (cells.size() != static_cast<std::size_t>(nx) * ny) throw ValidationError("cells: cell count does not match size");
    const Vec2 hi{origin.x + nx * resolution, origin.y + ny * resolution};
    for (std::size_t i = 0; i < rooms.size(); ++i) {
        const Room& r = rooms[i];
        const std::string field = "rooms[" + std::to_string(i) + "]";
        if (r.name.empty()) throw ValidationError(field + ".name: must be non-empty");
        if (!(r.max.x > r.min.x && r.max.y > r.min.y)) throw ValidationError(field + ": max must exceed min");
        if (r.min.x < origin.x || r.min.y < origin.y || r.max.x > hi.x || r.max.y > hi.y)
            throw ValidationError(field + ": room '" + r.name + "' extends outside the scene");
        for (std::size_t j = 0; j < i; ++j)
            if (rects_overlap(r.min, r.max, rooms[j].min, rooms[j].max))
                throw ValidationError(field + ": room '" + r.name + "' overlaps room '" + rooms[j].name + "'");
    }
    std::set<int> ids;
    for (std::size_t i = 0; i < objects.size(); ++i) {
        const SceneObject& o = objects[i];
        const std::string field = "objects[" + std::to_string(i) + "]";
        if (!ids.insert(o.id).second) throw ValidationError(field + ".id: duplicate object id " + std::to_string(o.id));
        if (o.category.empty()) throw ValidationError(field + ".category: must be non-empty");
        if (!palette_color(o.color)) throw ValidationError(field + ".color: unknown color '" + o.color + "'");
        if (!(o.size.x > 0.0 && o.size.y > 0.0)) throw ValidationError(field + ".size: must be positive");
        if (!(o.height > 0.0 && o.height <= wall_height)) throw ValidationError(field + ".height: must be in (0, 3.5]");
        // Every cell under the footprint must be floor.
        int x0, y0, x1, y1;
        world_to_cell(o.min(), x0, y0);
        world_to_cell({o.max().x - 1e-9, o.max().y - 1e-9}, x1, y1);
        for (int x = x0; x <= x1; ++x)
            for (int y = y0; y <= y1; ++y)
                if (cell(x, y) != CellType::floor)
                    throw ValidationError(field + ".position: object '" + o.category + "' (id " + std::to_string(o.id) +
                                          ") lies outside the walled floor area");
    }
    if (spawns.empty()) throw ValidationError("spawns: at least one spawn pose is required");
    bool any_free = false;
    for (const Pose& s : spawns) any_free = any_free || !blocked(s.xy());
    if (!any_free) throw ValidationError("spawns: no spawn pose is traversable");
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

std::vector<CellType> decode_row(const std::string& row, int nx, int row_index) {
    std::vector<CellType> out;
    std::size_t i = 0;
    const std::string field = "cells[" + std::to_string(row_index) + "]";
    while (i < row.size()) {
        if (row[i] == ' ') {
            ++i;
            continue;
        }
        std::size_t count = 0;
        bool has_count = false;
        while (i < row.size() && std::isdigit(static_cast<unsigned char>(row[i]))) {
            count = count * 10 + static_cast<std::size_t>(row[i] - '0');
            has_count = true;
            ++i;
        }
        if (i >= row.size()) throw ValidationError(field + ": run length without a cell symbol");
        if (!has_count) count = 1;
        CellType t;
        switch (row[i]) {
            case '#': t = CellType::wall; break;
            case '.': t = CellType::floor; break;
            case '_': t = CellType::empty; break;
            default: throw ValidationError(field + ": unknown cell symbol '" + std::string(1, row[i]) + "'");
        }
        out.insert(out.end(), count, t);
        ++i;
    }
    if (static_cast<int>(out.size()) != nx)
        throw ValidationError(field + ": row expands to " + std::to_string(out.size()) + " cells, expected " +
                              std::to_string(nx));
    return out;
}

std::string encode_row(const Scene& s, int y) {
    std::string out;
    int x = 0;
    while (x < s.nx) {
        const CellType t = s.cell(x, y);
        int run = 0;
        while (x < s.nx && s.cell(x, y) == t) {
            ++run;
            ++x;
        }
        out += std::to_string(run);
        out += t == CellType::wall ? '#' : t == CellType::floor ? '.' : '_';
    }
    return out;
}

Vec2 vec2_from(const json& j, const std::string& field) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ValidationError(field + ": expected [x, y]");
    return {j[0].get<double>(), j[1].get<double>()};
}

template <typename T>
T required(const json& j, const char* key, const std::string& field) {
    if (!j.contains(key)) throw ValidationError(field + "." + key + ": missing");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(field + "." + key + ": wrong type");
    }
}

}  // namespace

Scene parse_scene(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("scene file is not valid JSON: ") + e.what());
    }
    Scene s;
    s.name = required<std::string>(j, "name", "scene");
    s.resolution = j.value("resolution", 0.1);
    s.origin = j.contains("origin") ? vec2_from(j["origin"], "origin") : Vec2{};
    if (!j.contains("size")) throw ValidationError("size: missing");
    const Vec2 size = vec2_from(j["size"], "size");
    s.nx = static_cast<int>(size.x);
    s.ny = static_cast<int>(size.y);
    if (s.nx <= 0 || s.ny <= 0) throw ValidationError("size: must be positive");
    const auto rows = required<std::vector<std::string>>(j, "cells", "scene");
    if (static_cast<int>(rows.size()) != s.ny)
        throw ValidationError("cells: " + std::to_string(rows.size()) + " rows, expected " + std::to_string(s.ny));
    s.cells.resize(static_cast<std::size_t>(s.nx) * s.ny);
    for (int i = 0; i < s.ny; ++i) {
        const auto row = decode_row(rows[static_cast<std::size_t>(i)], s.nx, i);
        const int y = s.ny - 1 - i;  // first row is the top of the map
        std::copy(row.begin(), row.end(), s.cells.begin() + static_cast<std::ptrdiff_t>(y) * s.nx);
    }
    for (std::size_t i = 0; i < j.value("rooms", json::array()).size(); ++i) {
        const json& r = j["rooms"][i];
        const std::string field = "rooms[" + std::to_string(i) + "]";
        s.rooms.push_back({required<std::string>(r, "name", field), vec2_from(r.value("min", json()), field + ".min"),
                           vec2_from(r.value("max", json()), field + ".max")});
    }
    for (std::size_t i = 0; i < j.value("objects", json::array()).size(); ++i) {
        const json& o = j["objects"][i];
        const std::string field = "objects[" + std::to_string(i) + "]";
        SceneObject obj;
        obj.id = required<int>(o, "id", field);
        obj.category = required<std::string>(o, "category", field);
        obj.color = required<std::string>(o, "color", field);
        obj.attributes = o.value("attributes", std::vector<std::string>{});
        obj.position = vec2_from(o.value("position", json()), field + ".position");
        obj.size = vec2_from(o.value("size", json()), field + ".size");
        obj.height = o.value("height", 1.2);
        s.objects.push_back(std::move(obj));
    }
    for (std::size_t i = 0; i < j.value("spawns", json::array()).size(); ++i) {
        const json& sp = j["spawns"][i];
        const std::string field = "spawns[" + std::to_string(i) + "]";
        if (!sp.is_array() || sp.size() != 3) throw ValidationError(field + ": expected [x, y, yaw]");
        s.spawns.emplace_back(sp[0].get<double>(), sp[1].get<double>(), sp[2].get<double>());
    }
    s.validate();
    return s;
}

Scene load_scene(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open scene file " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_scene(ss.str());
}

std::string serialize_scene(const Scene& s) {
    json j;
    j["name"] = s.name;
    j["resolution"] = s.resolution;
    j["origin"] = {s.origin.x, s.origin.y};
    j["size"] = {s.nx, s.ny};
    json rows = json::array();
    for (int y = s.ny - 1; y >= 0; --y) rows.push_back(encode_row(s, y));
    j["cells"] = rows;
    j["rooms"] = json::array();
    for (const auto& r : s.rooms)
        j["rooms"].push_back({{"name", r.name}, {"min", {r.min.x, r.min.y}}, {"max", {r.max.x, r.max.y}}});
    j["objects"] = json::array();
    for (const auto& o : s.objects)
        j["objects"].push_back({{"id", o.id},
                                {"category", o.category},
                                {"color", o.color},
                                {"attributes", o.attributes},
                                {"position", {o.position.x, o.position.y}},
                                {"size", {o.size.x, o.size.y}},
                                {"height", o.height}});
    j["spawns"] = json::array();
    for (const auto& sp : s.spawns) j["spawns"].push_back({sp.position.x, sp.position.y, sp.yaw});
    return j.dump(2) + "\n";
}

void save_scene(const Scene& scene, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw Error("cannot open " + path.string() + " for writing");
    f << serialize_scene(scene);
}

// ---------------------------------------------------------------------------
// Rendering

RayHit cast_ray(const Scene& scene, const Vec3& o, const Vec3& dir, double max_range) {
    RayHit best;
    double best_t = max_range;

    // Objects: exact slab test against the extruded footprint box.
    for (const auto& obj : scene.objects) {
        const double lo[3] = {obj.min().x, obj.min().y, 0.0};
        const double hi[3] = {obj.max().x, obj.max().y, obj.height};
        const double os[3] = {o.x, o.y, o.z};
        const double ds[3] = {dir.x, dir.y, dir.z};
        double t0 = 0.0, t1 = best_t;
        bool miss = false;
        for (int a = 0; a < 3 && !miss; ++a) {
            if (std::abs(ds[a]) < 1e-12) {
                miss = os[a] < lo[a] || os[a] > hi[a];
                continue;
            }
            double ta = (lo[a] - os[a]) / ds[a], tb = (hi[a] - os[a]) / ds[a];
            if (ta > tb) std::swap(ta, tb);
            t0 = std::max(t0, ta);
            t1 = std::min(t1, tb);
            miss = t0 > t1;
        }
        if (!miss && t0 > 0.0 && t0 < best_t) {
            best_t = t0;
            best = {RayHit::Kind::object, t0, obj.id};
        }
    }

    // Walls and floor: march the cells under the horizontal projection.
    const double hn = std::hypot(dir.x, dir.y);
    const double res = scene.resolution;
    if (hn < 1e-12) {
        if (dir.z < 0.0) {
            const double t = o.z / -dir.z;
            int cx, cy;
            scene.world_to_cell(o.xy(), cx, cy);
            if (t < best_t && scene.cell(cx, cy) == CellType::floor) return {RayHit::Kind::floor, t, -1};
        }
        return best;
    }
    const double hx = dir.x / hn, hy = dir.y / hn;
    const double s_limit = best_t * hn;  // horizontal distance bound
    const double s_floor = dir.z < 0.0 ? o.z * hn / -dir.z : std::numeric_limits<double>::infinity();
    auto z_at = [&](double s) { return o.z + dir.z * (s / hn); };

    int cx, cy;
    scene.world_to_cell(o.xy(), cx, cy);
    const int step_x = hx > 0 ? 1 : (hx < 0 ? -1 : 0);
    const int step_y = hy > 0 ? 1 : (hy < 0 ? -1 : 0);
    const double inf = std::numeric_limits<double>::infinity();
    double s_max_x = step_x == 0 ? inf
                                 : ((scene.origin.x + (cx + (step_x > 0 ? 1 : 0)) * res) - o.x) / hx;
    double s_max_y = step_y == 0 ? inf
                                 : ((scene.origin.y + (cy + (step_y > 0 ? 1 : 0)) * res) - o.y) / hy;
    const double s_dx = step_x == 0 ? inf : res / std::abs(hx);
    const double s_dy = step_y == 0 ? inf : res / std::abs(hy);

    double s_in = 0.0;
    while (s_in < s_limit) {
        const CellType t = scene.cell(cx, cy);
        const double s_out = std::min(s_max_x, s_max_y);
        if (t == CellType::wall && s_in > 0.0) {
            const double z = z_at(s_in);
            if (z >= 0.0 && z <= Scene::wall_height) return {RayHit::Kind::wall, s_in / hn, -1};
            if (z > Scene::wall_height && dir.z >= 0.0) return best;
        }
        if (s_floor >= s_in && s_floor < s_out) {
            if (t == CellType::floor && s_floor < s_limit) return {RayHit::Kind::floor, s_floor / hn, -1};
            return best;
        }
        if (s_max_x < s_max_y) {
            s_in = s_max_x;
            s_max_x += s_dx;
            cx += step_x;
        } else {
            s_in = s_max_y;
            s_max_y += s_dy;
            cy += step_y;
        }
    }
    return best;
}

Observation render(const Scene& scene, const Pose& pose, const CameraModel& cam) {
    cam.validate();
    if (scene.blocked(pose.xy()))
        throw InvalidArgument("render: pose (" + std::to_string(pose.position.x) + ", " +
                              std::to_string(pose.position.y) + ") is not traversable");
    Observation obs;
    obs.pose = pose;
    obs.rgb = RgbImage(cam.width, cam.height_px);
    obs.depth = DepthImage(cam.width, cam.height_px, static_cast<float>(cam.max_range));
    const Vec3 o = cam.origin(pose);
    for (int y = 0; y < cam.height_px; ++y)
        for (int x = 0; x < cam.width; ++x) {
            const Vec3 d = cam.ray(pose, x + 0.5, y + 0.5);
            const RayHit hit = cast_ray(scene, o, d, cam.max_range);
            if (hit.kind == RayHit::Kind::none) continue;
            Rgb base = kFloorColor;
            if (hit.kind == RayHit::Kind::wall) base = kWallColor;
            if (hit.kind == RayHit::Kind::object) base = *palette_color(scene.object(hit.object_id)->color);
            const double shade = 1.0 - 0.5 * std::clamp(hit.range / cam.max_range, 0.0, 1.0);
            obs.rgb.set(x, y,
                        {static_cast<std::uint8_t>(std::lround(base.r * shade)),
                         static_cast<std::uint8_t>(std::lround(base.g * shade)),
                         static_cast<std::uint8_t>(std::lround(base.b * shade))});
            obs.depth.set(x, y, static_cast<float>(hit.range));
        }

    for (const auto& obj : scene.objects) {
        const Vec3 center{obj.position.x, obj.position.y, 0.5 * obj.height};
        const auto px = cam.project(pose, center);
        if (!px || px->u < 0.0 || px->u >= cam.width || px->v < 0.0 || px->v >= cam.height_px) continue;
        const Vec3 to = center - o;
        const double dist = to.norm();
        if (dist > cam.max_range) continue;
        const RayHit hit = cast_ray(scene, o, to * (1.0 / dist), cam.max_range);
        if (hit.kind != RayHit::Kind::object || hit.object_id != obj.id) continue;

        double u0 = cam.width, u1 = 0.0, v0 = cam.height_px, v1 = 0.0;
        for (int c = 0; c < 8; ++c) {
            const Vec3 corner{(c & 1) ? obj.max().x : obj.min().x, (c & 2) ? obj.max().y : obj.min().y,
                              (c & 4) ? obj.height : 0.0};
            const auto cp = cam.project(pose, corner);
            if (!cp) continue;
            u0 = std::min(u0, cp->u);
            u1 = std::max(u1, cp->u);
            v0 = std::min(v0, cp->v);
            v1 = std::max(v1, cp->v);
        }
        Detection det;
        det.object_id = obj.id;
        det.category = obj.category;
        det.color = obj.color;
        det.position = center;
        det.distance = dist;
        det.x0 = std::clamp(static_cast<int>(std::floor(u0)), 0, cam.width);
        det.x1 = std::clamp(static_cast<int>(std::ceil(u1)), 0, cam.width);
        det.y0 = std::clamp(static_cast<int>(std::floor(v0)), 0, cam.height_px);
        det.y1 = std::clamp(static_cast<int>(std::ceil(v1)), 0, cam.height_px);
        obs.detections.push_back(std::move(det));
    }
    return obs;
}

Pose move(const Scene& scene, const Pose& pose, const Pose& target, double collision_margin) {
    const Vec2 a = pose.xy(), b = target.xy();
    const Vec2 delta = b - a;
    const double len = delta.norm();
    if (len < 1e-12) return Pose(pose.position, target.yaw);

    int cx, cy;
    scene.world_to_cell(a, cx, cy);
    if (scene.blocked_cell(cx, cy)) return pose;

    const double res = scene.resolution;
    const double hx = delta.x / len, hy = delta.y / len;
    const int step_x = hx > 0 ? 1 : (hx < 0 ? -1 : 0);
    const int step_y = hy > 0 ? 1 : (hy < 0 ? -1 : 0);
    const double inf = std::numeric_limits<double>::infinity();
    double t_max_x = step_x == 0 ? inf : ((scene.origin.x + (cx + (step_x > 0 ? 1 : 0)) * res) - a.x) / hx;
    double t_max_y = step_y == 0 ? inf : ((scene.origin.y + (cy + (step_y > 0 ? 1 : 0)) * res) - a.y) / hy;
    const double t_dx = step_x == 0 ? inf : res / std::abs(hx);
    const double t_dy = step_y == 0 ? inf : res / std::abs(hy);

    while (true) {
        double t_enter;
        if (t_max_x < t_max_y) {
            t_enter = t_max_x;
            t_max_x += t_dx;
            cx += step_x;
        } else {
            t_enter = t_max_y;
            t_max_y += t_dy;
            cy += step_y;
        }
        if (t_enter >= len) break;
        if (scene.blocked_cell(cx, cy)) {
            const double t = std::max(0.0, t_enter - collision_margin);
            return Pose(Vec3{a.x + hx * t, a.y + hy * t, pose.position.z}, target.yaw);
        }
    }
    return target;
}

}  // namespace meqa
