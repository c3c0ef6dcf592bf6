// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "dge/geometry.hpp"

namespace dge {

inline constexpr int kMaxShDegree = 2;

/// Number of spherical-harmonic basis functions per color channel.
constexpr int sh_basis_count(int degree) { return (degree + 1) * (degree + 1); }

/// One anisotropic Gaussian. The covariance is kept factored as
/// R(orientation) * diag(scale^2) * R^T so it stays positive definite.
/// `sh` holds basis_count * 3 coefficients laid out basis-major:
/// sh[k * 3 + channel].
struct GaussianPrimitive {
    double opacity = 0.0;
    Vec3 mean = Vec3::Zero();
    Vec3 scale = Vec3::Ones();
    Vec4 orientation = Vec4(1.0, 0.0, 0.0, 0.0);  // w, x, y, z
    std::vector<double> sh = std::vector<double>(3, 0.0);

    void validate(int sh_degree) const;
};

bool operator==(const GaussianPrimitive& a, const GaussianPrimitive& b);

class GaussianMixture {
  public:
    GaussianMixture() = default;
    explicit GaussianMixture(int sh_degree, std::vector<GaussianPrimitive> primitives = {});

    int sh_degree() const { return sh_degree_; }
    std::size_t size() const { return primitives_.size(); }
    bool empty() const { return primitives_.empty(); }

    const std::vector<GaussianPrimitive>& primitives() const { return primitives_; }
    std::vector<GaussianPrimitive>& primitives() { return primitives_; }
    const GaussianPrimitive& operator[](std::size_t i) const { return primitives_[i]; }
    GaussianPrimitive& operator[](std::size_t i) { return primitives_[i]; }

    void add(GaussianPrimitive p);
    /// Checks every primitive invariant; throws ValidationError.
    void validate() const;

    friend bool operator==(const GaussianMixture&, const GaussianMixture&) = default;

  private:
    int sh_degree_ = 0;
    std::vector<GaussianPrimitive> primitives_;
};

/// Convenience constructor for a degree-0 primitive with a given RGB color.
/// The DC coefficient is chosen so the rendered color equals `rgb`.
GaussianPrimitive make_gaussian(double opacity, const Vec3& mean, const Vec3& scale,
                                const Vec4& orientation, const Vec3& rgb, int sh_degree = 0);

/// DC coefficient that produces color `c` at degree 0.
double sh_dc_from_color(double c);

/// Rotation matrix of the normalized quaternion (w, x, y, z).
Mat3 rotation_matrix(const Vec4& q);

Mat3 covariance(const GaussianPrimitive& prim);
/// Inverse covariance from the factors: R * diag(scale^-2) * R^T.
Mat3 precision(const GaussianPrimitive& prim);

/// exp(-1/2 (x - mu)^T Sigma^-1 (x - mu)).
double gaussian_eval(const GaussianPrimitive& prim, const Vec3& x);

/// Real spherical harmonics (Condon-Shortley phase, Y00 = 1/(2 sqrt(pi)))
/// evaluated as polynomials of the components of `dir`, ordered l-major then
/// m = -l..l. `grad`, when non-null, receives the partial derivatives of each
/// polynomial with respect to dir's components.
void sh_basis(int degree, const Vec3& dir, double* out, Vec3* grad = nullptr);

/// Directional color c_i(nu) for a unit direction nu.
Vec3 sh_color(const GaussianPrimitive& prim, int sh_degree, const Vec3& nu);

/// sigma(x) = sum_i sigma_i g_i(x), summed in primitive order.
double field_opacity(const GaussianMixture& mix, const Vec3& x);

/// Opacity-weighted mean of the primitive colors at x. Throws RuntimeFailure
/// where the total weight is zero (the ratio is undefined there).
Vec3 field_color(const GaussianMixture& mix, const Vec3& x, const Vec3& nu);

}  // namespace dge
