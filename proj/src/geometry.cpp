// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#include "dge/geometry.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace dge {

void Intrinsics::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw ValidationError("intrinsics: focal lengths must be positive");
    if (width < 1 || height < 1) throw ValidationError("intrinsics: image size must be positive");
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
        throw ValidationError("intrinsics: principal point outside the image");
    }
}

Mat3 Intrinsics::matrix() const {
    Mat3 k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
}

Camera::Camera(const Intrinsics& intrinsics, const Mat3& rotation, const Vec3& translation)
    : intrinsics_(intrinsics), rotation_(rotation), translation_(translation) {
    intrinsics_.validate();
    if (!rotation_.allFinite() || !translation_.allFinite()) {
        throw ValidationError("camera: pose must be finite");
    }
    const double orth = (rotation_ * rotation_.transpose() - Mat3::Identity()).norm();
    if (orth > 1e-9 || rotation_.determinant() < 0.0) {
        throw ValidationError("camera: rotation must be orthonormal with determinant +1");
    }
}

Camera Camera::look_at(const Intrinsics& intrinsics, const Vec3& eye, const Vec3& target,
                       const Vec3& up) {
    const Vec3 z = (target - eye).normalized();
    Vec3 x = (-up).cross(z);
    if (x.norm() < 1e-12) throw ValidationError("look_at: view direction parallel to up");
    x.normalize();
    const Vec3 y = z.cross(x);
    Mat3 r;
    r.row(0) = x.transpose();
    r.row(1) = y.transpose();
    r.row(2) = z.transpose();
    return Camera(intrinsics, r, -r * eye);
}

Vec3 Camera::ray_direction(double px, double py) const {
    const Vec3 d((px - intrinsics_.cx) / intrinsics_.fx, (py - intrinsics_.cy) / intrinsics_.fy, 1.0);
    return (rotation_.transpose() * d).normalized();
}

Vec3 Camera::unproject(double px, double py, double z) const {
    const Vec3 pc((px - intrinsics_.cx) / intrinsics_.fx * z, (py - intrinsics_.cy) / intrinsics_.fy * z, z);
    return rotation_.transpose() * (pc - translation_);
}

std::optional<Vec2> project(const Camera& camera, const Vec3& point) {
    const Vec3 pc = camera.to_camera(point);
    if (!(pc.z() > 0.0)) return std::nullopt;
    const Intrinsics& k = camera.intrinsics();
    return Vec2(k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy);
}

namespace {

Mat3 skew(const Vec3& t) {
    Mat3 s;
    s << 0.0, -t.z(), t.y(), t.z(), 0.0, -t.x(), -t.y(), t.x(), 0.0;
    return s;
}

}  // namespace

Mat3 fundamental_matrix(const Camera& a, const Camera& b) {
    if ((a.center() - b.center()).norm() <= 1e-9) {
        throw ValidationError("fundamental_matrix: coincident camera centers");
    }
    // X_b = R X_a + t for the relative motion A -> B.
    const Mat3 r = b.rotation() * a.rotation().transpose();
    const Vec3 t = b.translation() - r * a.translation();
    const Mat3 essential = skew(t) * r;
    const Mat3 ka_inv = a.intrinsics().matrix().inverse();
    const Mat3 kb_inv = b.intrinsics().matrix().inverse();
    return kb_inv.transpose() * essential * ka_inv;
}

std::optional<EpipolarLine> epipolar_line(const Mat3& F, const Vec2& u) {
    const Vec3 l = F * Vec3(u.x(), u.y(), 1.0);
    const double n = std::hypot(l.x(), l.y());
    const double scale = F.norm() * std::sqrt(u.squaredNorm() + 1.0);
    if (!(n > 1e-12 * scale)) return std::nullopt;
    return EpipolarLine{l.x() / n, l.y() / n, l.z() / n};
}

double point_line_distance(const EpipolarLine& line, const Vec2& v) {
    return std::fabs(line.a * v.x() + line.b * v.y() + line.c);
}

double forward_angle(const Camera& a, const Camera& b) {
    const double d = std::clamp(a.forward().dot(b.forward()), -1.0, 1.0);
    return std::acos(d);
}

std::vector<std::size_t> sort_cameras(std::span<const Camera> cameras) {
    if (cameras.empty()) throw ValidationError("sort_cameras: no cameras");
    std::size_t ref = 0;
    for (std::size_t i = 1; i < cameras.size(); ++i) {
        if (cameras[i].center().x() > cameras[ref].center().x()) ref = i;
    }
    std::vector<double> angle(cameras.size());
    for (std::size_t i = 0; i < cameras.size(); ++i) {
        angle[i] = i == ref ? 0.0 : forward_angle(cameras[ref], cameras[i]);
    }
    std::vector<std::size_t> order;
    order.reserve(cameras.size());
    order.push_back(ref);
    for (std::size_t i = 0; i < cameras.size(); ++i) {
        if (i != ref) order.push_back(i);
    }
    std::stable_sort(order.begin() + 1, order.end(),
                     [&](std::size_t l, std::size_t r) { return angle[l] < angle[r]; });
    return order;
}

std::pair<std::size_t, std::size_t> nearest_key_views(std::size_t t,
                                                      std::span<const std::size_t> keys,
                                                      std::span<const Camera> cameras) {
    if (keys.empty()) throw ValidationError("nearest_key_views: empty key set");
    if (t >= cameras.size()) throw ValidationError("nearest_key_views: view index out of range");
    std::vector<std::pair<double, std::size_t>> ranked;
    ranked.reserve(keys.size());
    for (std::size_t k : keys) {
        if (k >= cameras.size()) throw ValidationError("nearest_key_views: key index out of range");
        if (k == t) throw ValidationError("nearest_key_views: view is a key view");
        ranked.emplace_back(forward_angle(cameras[t], cameras[k]), k);
    }
    std::sort(ranked.begin(), ranked.end());
    if (ranked.size() == 1) return {ranked[0].second, ranked[0].second};
    return {ranked[0].second, ranked[1].second};
}

}  // namespace dge
