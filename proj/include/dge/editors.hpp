// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dge/field.hpp"
#include "dge/mveditor.hpp"

namespace dge {

inline constexpr int kFeatureDim = 16;

/// Patch descriptors on a stride x stride grid (the last row/column of cells
/// may be partial): mean RGB, RGB standard deviation, an 8-bin histogram of
/// luminance gradient orientation weighted by magnitude, and mean |gx|,
/// |gy|. Luminance uses Rec. 709 weights; gradients are central differences
/// with clamped borders.
FeatureGrid extract_patch_features(const Image& image, int stride);

/// Rec. 709 luminance.
double luminance(const Vec3& rgb);

/// The mock edit applied to one color at world position `world`, for the
/// view with stable id `view_id`. `strength` multiplies the spec strength.
Vec3 edit_color(const Vec3& rgb, const Vec3& world, const EditSpec& spec, std::size_t view_id, double strength);

/// The same edit applied in 3D to the degree-0 color of every Gaussian (the
/// per-view-random kind uses its base tint). Rendering the result gives
/// ground-truth-consistent edited views.
GaussianMixture apply_edit_3d(const GaussianMixture& mix, const EditSpec& spec, double strength = 1.0);

/// Multiplies `source` by the bilinearly upsampled per-channel color gain
/// (e + eps) / (r + eps) of the first three feature channels of edited (e)
/// over reference (r), clamped to [0, 1]. Dark pixels stay dark and equal
/// features leave the source bit-identical.
inline constexpr double kGainEpsilon = 1e-3;
Image decode_color_gain(const FeatureGrid& edited, const FeatureGrid& reference, const Image& source);

/// Leaves every feature untouched; edit_sequence with it is the identity.
class IdentityEditor final : public Editor {
  public:
    explicit IdentityEditor(int stride = 8) : stride_(stride) {}
    FeatureGrid extract(const Image& image) const override;
    std::vector<FeatureGrid> transform(std::span<const FeatureGrid> grids, std::span<const ViewContext> views,
                                       const EditSpec& spec) const override;
    Image decode(const FeatureGrid& edited, const FeatureGrid& reference, const Image& source) const override;

  private:
    int stride_;
};

struct MockEditorConfig {
    int stride = 8;
    int stages = 4;         ///< emulated denoising steps
    double sharpness = 256.0;  ///< query scale: Q = sharpness * unit(descriptor)
    bool attention = true;
};

/// Deterministic stand-in for a diffusion editor. Each stage moves the cell
/// colors 1/stages of the way toward the edited colors and then, when
/// enabled, runs st_attention across all grids being edited with queries
/// and keys from the normalized source descriptors and values from the
/// current edit deltas (current minus source features).
class MockEditor final : public Editor {
  public:
    explicit MockEditor(MockEditorConfig cfg = {});
    FeatureGrid extract(const Image& image) const override;
    std::vector<FeatureGrid> transform(std::span<const FeatureGrid> grids, std::span<const ViewContext> views,
                                       const EditSpec& spec) const override;
    Image decode(const FeatureGrid& edited, const FeatureGrid& reference, const Image& source) const override;
    const MockEditorConfig& config() const { return cfg_; }

  private:
    MockEditorConfig cfg_;
};

}  // namespace dge
