#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "meqa/camera.hpp"
#include "meqa/geometry.hpp"
#include "meqa/image.hpp"

namespace meqa {

enum class CellType : std::uint8_t { empty, floor, wall };

struct Room {
    std::string name;
    Vec2 min;
    Vec2 max;

    bool contains(Vec2 p) const { return p.x >= min.x && p.x < max.x && p.y >= min.y && p.y < max.y; }
    double area() const { return (max.x - min.x) * (max.y - min.y); }
    bool operator==(const Room&) const = default;
};

struct SceneObject {
    int id = 0;
    std::string category;
    std::string color;  // palette name
    std::vector<std::string> attributes;
    Vec2 position;      // footprint center, meters
    Vec2 size;          // footprint extent along x and y, meters
    double height = 1.2;

    Vec2 min() const { return {position.x - 0.5 * size.x, position.y - 0.5 * size.y}; }
    Vec2 max() const { return {position.x + 0.5 * size.x, position.y + 0.5 * size.y}; }
    bool operator==(const SceneObject&) const = default;
};

inline constexpr Rgb kWallColor{170, 170, 160};
inline constexpr Rgb kFloorColor{110, 100, 90};

// Named flat colors available to scene objects.
std::optional<Rgb> palette_color(const std::string& name);

struct Detection {
    int object_id = 0;
    std::string category;
    std::string color;
    Vec3 position;  // object center
    double distance = 0.0;
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // bbox, pixels, half-open
    bool operator==(const Detection&) const = default;
};

struct Observation {
    RgbImage rgb;
    DepthImage depth;
    Pose pose;
    std::vector<Detection> detections;  // ground truth, sorted by object id
};

// 2-D gridworld. Walls extrude to wall_height, objects to their own height.
class Scene {
public:
    static constexpr double wall_height = 3.5;

    std::string name;
    double resolution = 0.1;
    Vec2 origin;
    int nx = 0;
    int ny = 0;
    std::vector<CellType> cells;  // row-major from the bottom row (y index 0)
    std::vector<Room> rooms;
    std::vector<SceneObject> objects;
    std::vector<Pose> spawns;

    CellType cell(int x, int y) const;
    bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < nx && y < ny; }
    void world_to_cell(Vec2 p, int& x, int& y) const;

    // Wall, empty space, out of bounds, or inside an object footprint.
    bool blocked(Vec2 p) const;
    bool blocked_cell(int x, int y) const;
    const Room* room_at(Vec2 p) const;
    const SceneObject* object(int id) const;
    double floor_area() const;

    // Throws ValidationError naming the offending field.
    void validate() const;

    bool operator==(const Scene&) const = default;
};

Scene load_scene(const std::filesystem::path& path);
Scene parse_scene(const std::string& json_text);
void save_scene(const Scene& scene, const std::filesystem::path& path);
std::string serialize_scene(const Scene& scene);

struct RayHit {
    enum class Kind { none, floor, wall, object } kind = Kind::none;
    double range = 0.0;
    int object_id = -1;
};

// First surface along a world ray, within max_range.
RayHit cast_ray(const Scene& scene, const Vec3& origin, const Vec3& dir, double max_range);

Observation render(const Scene& scene, const Pose& pose, const CameraModel& cam);

// Straight-line motion; stops collision_margin short of the first blocked cell.
Pose move(const Scene& scene, const Pose& pose, const Pose& target, double collision_margin = 0.05);

}  // namespace meqa
