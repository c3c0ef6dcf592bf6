// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dge/error.hpp"

namespace dge {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole intrinsics in pixels. Pixel (x, y) covers [x, x+1) x [y, y+1); its
/// center is at (x + 0.5, y + 0.5).
struct Intrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;

    void validate() const;
    Mat3 matrix() const;
};

/// World-to-camera pose plus intrinsics. Camera frame: x right, y down,
/// z forward.
class Camera {
  public:
    Camera() = default;
    Camera(const Intrinsics& intrinsics, const Mat3& rotation, const Vec3& translation);

    /// Camera at `eye` looking at `target`; `up` is the world direction that
    /// should appear upward in the image.
    static Camera look_at(const Intrinsics& intrinsics, const Vec3& eye, const Vec3& target,
                          const Vec3& up = Vec3(0.0, 1.0, 0.0));

    const Intrinsics& intrinsics() const { return intrinsics_; }
    const Mat3& rotation() const { return rotation_; }
    const Vec3& translation() const { return translation_; }
    int width() const { return intrinsics_.width; }
    int height() const { return intrinsics_.height; }

    Vec3 center() const { return -rotation_.transpose() * translation_; }
    /// Camera z-axis in world coordinates (unit).
    Vec3 forward() const { return rotation_.row(2).transpose().normalized(); }
    Vec3 to_camera(const Vec3& world) const { return rotation_ * world + translation_; }
    /// Unit world-space direction of the ray through continuous pixel (px, py).
    Vec3 ray_direction(double px, double py) const;
    /// World point at camera-frame depth z along the ray through (px, py).
    Vec3 unproject(double px, double py, double z) const;

  private:
    Intrinsics intrinsics_{};
    Mat3 rotation_ = Mat3::Identity();
    Vec3 translation_ = Vec3::Zero();
};

/// Normalized implicit line a*x + b*y + c = 0 with a^2 + b^2 = 1.
struct EpipolarLine {
    double a = 0.0;
    double b = 1.0;
    double c = 0.0;
};

/// Pinhole projection; std::nullopt when the point is at or behind the
/// camera plane (camera-frame depth <= 0).
std::optional<Vec2> project(const Camera& camera, const Vec3& point);

/// F with v^T F u = 0 for u in camera A and v in camera B, built from the
/// exact calibration and relative pose. Throws ValidationError when the camera
/// centers coincide.
Mat3 fundamental_matrix(const Camera& a, const Camera& b);

/// Line F*u in the target view; std::nullopt when u is the epipole.
std::optional<EpipolarLine> epipolar_line(const Mat3& F, const Vec2& u);

double point_line_distance(const EpipolarLine& line, const Vec2& v);

/// Angle in radians between the forward vectors of two cameras.
double forward_angle(const Camera& a, const Camera& b);

/// Trajectory order: the camera whose center has the largest world x is the
/// reference, then the rest follow by ascending forward-vector angle to it.
/// Ties keep the original index order.
std::vector<std::size_t> sort_cameras(std::span<const Camera> cameras);

/// The two key views closest to view t by forward-vector angle, nearest
/// first. A single key is returned twice. Ties prefer the lower index.
std::pair<std::size_t, std::size_t> nearest_key_views(std::size_t t,
                                                      std::span<const std::size_t> keys,
                                                      std::span<const Camera> cameras);

}  // namespace dge
