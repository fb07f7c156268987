#include "meqa/camera.hpp"

#include <cmath>
#include <string>

#include "meqa/errors.hpp"

namespace meqa {

namespace {

struct Frame {
    Vec3 forward;
    Vec3 right;
    Vec3 up;
};

Frame camera_frame(const Pose& pose, double tilt_deg) {
    const double t = deg2rad(tilt_deg);
    const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
    return {
        {std::cos(t) * c, std::cos(t) * s, std::sin(t)},
        {s, -c, 0.0},
        {-std::sin(t) * c, -std::sin(t) * s, std::cos(t)},
    };
}

}  // namespace

void CameraModel::validate() const {
    if (!(hfov_deg > 0.0 && hfov_deg < 180.0))
        throw InvalidArgument("camera hfov must be in (0, 180), got " + std::to_string(hfov_deg));
    if (width <= 0 || height_px <= 0) throw InvalidArgument("camera image width/height must be positive");
    if (!(height > 0.0) || !std::isfinite(height)) throw InvalidArgument("camera height must be positive");
    if (!(max_range > 0.0)) throw InvalidArgument("camera max_range must be positive");
    if (!(tilt_deg > -90.0 && tilt_deg < 90.0)) throw InvalidArgument("camera tilt must be in (-90, 90)");
}

double CameraModel::focal() const { return 0.5 * width / std::tan(0.5 * deg2rad(hfov_deg)); }

Vec3 CameraModel::ray(const Pose& pose, double u, double v) const {
    const Frame fr = camera_frame(pose, tilt_deg);
    const double f = focal();
    const Vec3 d = fr.forward + fr.right * ((u - cx()) / f) + fr.up * (-(v - cy()) / f);
    return d * (1.0 / d.norm());
}

std::optional<PixelCoord> CameraModel::project(const Pose& pose, const Vec3& world) const {
    const Frame fr = camera_frame(pose, tilt_deg);
    const Vec3 p = world - origin(pose);
    const double zc = p.dot(fr.forward);
    if (zc <= 1e-9) return std::nullopt;
    const double f = focal();
    return PixelCoord{cx() + f * p.dot(fr.right) / zc, cy() - f * p.dot(fr.up) / zc};
}

}  // namespace meqa
