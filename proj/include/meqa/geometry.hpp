#pragma once

#include <cmath>
#include <numbers>

namespace meqa {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }
    bool operator==(const Vec2&) const = default;
};

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec2 xy() const { return {x, y}; }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
    bool operator==(const Vec3&) const = default;
};

// Wraps to [-pi, pi).
inline double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double w = std::fmod(a + std::numbers::pi, two_pi);
    if (w < 0.0) w += two_pi;
    return w - std::numbers::pi;
}

// Absolute yaw difference in [0, pi].
inline double angle_between(double a, double b) { return std::abs(wrap_angle(a - b)); }

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

// Agent pose. Position is the floor point under the camera; pitch comes from
// the camera tilt.
struct Pose {
    Vec3 position;
    double yaw = 0.0;

    Pose() = default;
    Pose(Vec3 p, double y) : position(p), yaw(wrap_angle(y)) {}
    Pose(double x, double y, double yaw_rad) : position{x, y, 0.0}, yaw(wrap_angle(yaw_rad)) {}

    Vec2 xy() const { return position.xy(); }
    bool finite() const { return position.finite() && std::isfinite(yaw); }
    bool operator==(const Pose&) const = default;
};

}  // namespace meqa
