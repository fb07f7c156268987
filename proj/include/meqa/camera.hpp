#pragma once

#include <optional>

#include "meqa/geometry.hpp"

namespace meqa {

struct PixelCoord {
    double u = 0.0;  // column, left to right
    double v = 0.0;  // row, top to bottom
};

// Pinhole camera mounted at a fixed height with a fixed downward tilt.
// World frame: x/y on the floor, z up; yaw rotates about z.
struct CameraModel {
    double height = 1.5;     // meters above floor
    double tilt_deg = -30.0; // negative looks down
    double hfov_deg = 120.0;
    int width = 640;
    int height_px = 480;
    double max_range = 10.0;  // meters; rays without a hit report this range

    void validate() const;

    double focal() const;  // pixels, same for both axes
    double cx() const { return 0.5 * width; }
    double cy() const { return 0.5 * height_px; }
    Vec3 origin(const Pose& pose) const { return {pose.position.x, pose.position.y, pose.position.z + height}; }

    // Unit world-frame direction through the center of pixel (u, v) (fractional coordinates allowed).
    Vec3 ray(const Pose& pose, double u, double v) const;

    // Projects a world point; empty when the point is behind the image plane.
    std::optional<PixelCoord> project(const Pose& pose, const Vec3& world) const;
};

}  // namespace meqa
