// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "dge/field.hpp"
#include "dge/geometry.hpp"
#include "dge/image.hpp"

namespace dge {

struct RenderConfig {
    double near = 0.05;   ///< ray interval start (scene units along the ray)
    double far = 20.0;    ///< ray interval end; also the depth of empty pixels
    int steps = 1024;     ///< midpoint samples per ray (ray-marcher only)
    Vec3 background = Vec3::Zero();
    double cutoff = 3.0;  ///< footprint truncation in Mahalanobis units (splatter only)

    void validate() const;
};

/// Reference integrator of the emission-absorption equation. Each pixel ray
/// x_t = x0 + t*d (d = -nu) is sampled at the midpoints of `steps` uniform
/// intervals of [near, far]; the emitted term c*sigma = sum_i c_i sigma_i g_i
/// is weighted by the running product of exp(-sigma * dt), and the residual
/// transmittance multiplies the background. Samples where every Gaussian is
/// beyond 8 Mahalanobis units (g < 1.3e-14) are skipped as empty.
Image raymarch_render(const GaussianMixture& mix, const Camera& camera, const RenderConfig& cfg);

/// Sorted front-to-back compositing of projected Gaussians.
///
/// Each Gaussian is projected with the local affine (EWA) approximation
/// Sigma' = J W Sigma W^T J^T and sorted by camera-frame depth of its mean
/// (ties by index). At pixel u its opacity is the absorbed fraction of its
/// ray-integrated density,
///   alpha_i(u) = min(0.999, 1 - exp(-sigma_i * tau_i(u) * g2d_i(u))),
/// where g2d_i is the projected footprint truncated at `cutoff` and
/// tau_i(u) = sqrt(2 pi / (d^T Sigma^-1 d)) is the line integral of g_i along
/// the pixel ray direction d through the Gaussian's peak. For small optical
/// depth this reduces to alpha = sigma_i * tau_i * g2d_i.
Image splat_render(const GaussianMixture& mix, const Camera& camera, const RenderConfig& cfg);

/// dL/d(parameter) for every primitive, laid out like the mixture.
struct MixtureGradients {
    std::vector<double> opacity;
    std::vector<Vec3> mean;
    std::vector<Vec3> scale;
    std::vector<Vec4> orientation;  ///< w.r.t. the raw quaternion components
    std::vector<std::vector<double>> sh;

    static MixtureGradients zeros_like(const GaussianMixture& mix);
    void add(const MixtureGradients& other);
    bool all_finite() const;
};

/// Exact reverse-mode gradients of L = <adjoint, splat_render(mix)> with
/// respect to every primitive parameter. When `rendered` is non-null it
/// receives the forward image.
MixtureGradients render_with_gradients(const GaussianMixture& mix, const Camera& camera,
                                       const RenderConfig& cfg, const Image& adjoint,
                                       Image* rendered = nullptr);

/// Coverage-normalized expected camera-frame depth of the Gaussian means
/// under the splatting weights: sum_i w_i z_i / sum_i w_i. Pixels with
/// coverage below kDepthCoverageFloor carry `far`.
inline constexpr double kDepthCoverageFloor = 1e-4;
Image render_depth(const GaussianMixture& mix, const Camera& camera, const RenderConfig& cfg);

/// Soft coverage of the selected subset: selected Gaussians emit 1, the rest
/// emit 0, composited with the splatting weights.
Image render_mask(const GaussianMixture& mix, const Camera& camera, const RenderConfig& cfg,
                  const std::vector<bool>& selected);

/// Per-pixel compositing weights of the splatter, in compositing order.
struct PixelContribution {
    std::size_t gaussian;
    double weight;
};
struct PixelTrace {
    std::vector<PixelContribution> contributions;
    double residual = 1.0;  ///< transmittance left for the background
};
PixelTrace trace_pixel(const GaussianMixture& mix, const Camera& camera, const RenderConfig& cfg,
                       int x, int y);

}  // namespace dge
