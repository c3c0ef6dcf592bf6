// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#include "dge/field.hpp"

#include <cmath>
#include <string>

namespace dge {
namespace {

constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                           -1.0925484305920792, 0.5462742152960396};

}  // namespace

void GaussianPrimitive::validate(int sh_degree) const {
    if (!(opacity >= 0.0) || !std::isfinite(opacity)) throw ValidationError("gaussian: opacity must be finite and >= 0");
    if (!mean.allFinite()) throw ValidationError("gaussian: mean must be finite");
    if (!scale.allFinite() || !(scale.minCoeff() > 0.0)) throw ValidationError("gaussian: scales must be positive");
    if (!orientation.allFinite() || std::fabs(orientation.norm() - 1.0) > 1e-9) {
        throw ValidationError("gaussian: orientation must be a unit quaternion");
    }
    if (sh.size() != static_cast<std::size_t>(3 * sh_basis_count(sh_degree))) {
        throw ValidationError("gaussian: expected " + std::to_string(3 * sh_basis_count(sh_degree)) +
                              " SH coefficients, got " + std::to_string(sh.size()));
    }
    for (double c : sh) {
        if (!std::isfinite(c)) throw ValidationError("gaussian: SH coefficients must be finite");
    }
}

bool operator==(const GaussianPrimitive& a, const GaussianPrimitive& b) {
    return a.opacity == b.opacity && a.mean == b.mean && a.scale == b.scale &&
           a.orientation == b.orientation && a.sh == b.sh;
}

GaussianMixture::GaussianMixture(int sh_degree, std::vector<GaussianPrimitive> primitives)
    : sh_degree_(sh_degree), primitives_(std::move(primitives)) {
    if (sh_degree < 0 || sh_degree > kMaxShDegree) {
        throw ValidationError("mixture: SH degree must be in [0, " + std::to_string(kMaxShDegree) + "]");
    }
    validate();
}

void GaussianMixture::add(GaussianPrimitive p) {
    p.validate(sh_degree_);
    primitives_.push_back(std::move(p));
}

void GaussianMixture::validate() const {
    for (std::size_t i = 0; i < primitives_.size(); ++i) {
        try {
            primitives_[i].validate(sh_degree_);
        } catch (const ValidationError& e) {
            throw ValidationError(std::string(e.what()) + " (primitive " + std::to_string(i) + ")");
        }
    }
}

double sh_dc_from_color(double c) { return c / kC0; }

GaussianPrimitive make_gaussian(double opacity, const Vec3& mean, const Vec3& scale,
                                const Vec4& orientation, const Vec3& rgb, int sh_degree) {
    GaussianPrimitive p;
    p.opacity = opacity;
    p.mean = mean;
    p.scale = scale;
    p.orientation = orientation.normalized();
    p.sh.assign(3 * sh_basis_count(sh_degree), 0.0);
    for (int j = 0; j < 3; ++j) p.sh[j] = sh_dc_from_color(rgb[j]);
    p.validate(sh_degree);
    return p;
}

Mat3 rotation_matrix(const Vec4& q_raw) {
    const Vec4 q = q_raw.normalized();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

Mat3 covariance(const GaussianPrimitive& prim) {
    const Mat3 r = rotation_matrix(prim.orientation);
    const Mat3 m = r * prim.scale.asDiagonal();
    const Mat3 s = m * m.transpose();
    return 0.5 * (s + s.transpose());
}

Mat3 precision(const GaussianPrimitive& prim) {
    const Mat3 r = rotation_matrix(prim.orientation);
    const Mat3 m = r * prim.scale.cwiseInverse().asDiagonal();
    return m * m.transpose();
}

double gaussian_eval(const GaussianPrimitive& prim, const Vec3& x) {
    // Mahalanobis distance in the Gaussian's principal frame.
    const Mat3 r = rotation_matrix(prim.orientation);
    const Vec3 local = (r.transpose() * (x - prim.mean)).cwiseQuotient(prim.scale);
    return std::exp(-0.5 * local.squaredNorm());
}

void sh_basis(int degree, const Vec3& dir, double* out, Vec3* grad) {
    const double x = dir.x(), y = dir.y(), z = dir.z();
    out[0] = kC0;
    if (grad) grad[0] = Vec3::Zero();
    if (degree < 1) return;
    out[1] = -kC1 * y;
    out[2] = kC1 * z;
    out[3] = -kC1 * x;
    if (grad) {
        grad[1] = Vec3(0.0, -kC1, 0.0);
        grad[2] = Vec3(0.0, 0.0, kC1);
        grad[3] = Vec3(-kC1, 0.0, 0.0);
    }
    if (degree < 2) return;
    out[4] = kC2[0] * x * y;
    out[5] = kC2[1] * y * z;
    out[6] = kC2[2] * (2.0 * z * z - x * x - y * y);
    out[7] = kC2[3] * x * z;
    out[8] = kC2[4] * (x * x - y * y);
    if (grad) {
        grad[4] = kC2[0] * Vec3(y, x, 0.0);
        grad[5] = kC2[1] * Vec3(0.0, z, y);
        grad[6] = kC2[2] * Vec3(-2.0 * x, -2.0 * y, 4.0 * z);
        grad[7] = kC2[3] * Vec3(z, 0.0, x);
        grad[8] = kC2[4] * Vec3(2.0 * x, -2.0 * y, 0.0);
    }
}

Vec3 sh_color(const GaussianPrimitive& prim, int sh_degree, const Vec3& nu) {
    if (std::fabs(nu.norm() - 1.0) > 1e-9) throw ValidationError("sh_color: direction must be unit length");
    const int n = sh_basis_count(sh_degree);
    double basis[sh_basis_count(kMaxShDegree)];
    sh_basis(sh_degree, nu, basis);
    Vec3 c = Vec3::Zero();
    for (int k = 0; k < n; ++k) {
        for (int j = 0; j < 3; ++j) c[j] += prim.sh[k * 3 + j] * basis[k];
    }
    return c;
}

double field_opacity(const GaussianMixture& mix, const Vec3& x) {
    double s = 0.0;
    for (const auto& p : mix.primitives()) s += p.opacity * gaussian_eval(p, x);
    return s;
}

Vec3 field_color(const GaussianMixture& mix, const Vec3& x, const Vec3& nu) {
    double total = 0.0;
    Vec3 acc = Vec3::Zero();
    for (const auto& p : mix.primitives()) {
        const double w = p.opacity * gaussian_eval(p, x);
        if (w == 0.0) continue;
        total += w;
        acc += w * sh_color(p, mix.sh_degree(), nu);
    }
    if (!(total > 0.0)) throw RuntimeFailure("field_color: zero total opacity at query point");
    return acc / total;
}

}  // namespace dge
