// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#include "dge/editors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace dge {

namespace {

constexpr double kShC0 = 0.28209479177387814;

Vec3 pixel_rgb(const Image& img, int x, int y) { return Vec3(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)); }

Vec3 unit_luminance(const Vec3& tint) {
    const double l = luminance(tint);
    return l > 0.0 ? Vec3(tint / l) : tint;
}

Vec3 random_view_tint(const EditSpec& spec, std::size_t view_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(view_id), 0x7f4a7c15u};
    std::mt19937_64 rng(seq);
    const double amp = spec.param("amplitude");
    Vec3 t = spec.tint();
    for (int j = 0; j < 3; ++j) {
        const double xi = 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0;
        t[j] = std::max(0.05, t[j] + amp * xi);
    }
    return t;
}

/// Cell center unprojected at the nearest depth inside the cell, so cells
/// on a silhouette take the foreground surface (background pixels are left
/// untouched by gain decoding anyway).
Vec3 cell_world_point(const FeatureGrid& g, int r, int c, const Camera& camera, const Image& depth) {
    const int s = g.stride();
    const int x0 = c * s, x1 = std::min(depth.width(), x0 + s);
    const int y0 = r * s, y1 = std::min(depth.height(), y0 + s);
    double z = std::numeric_limits<double>::infinity();
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) z = std::min(z, depth.at(x, y));
    }
    const Vec2 px = g.cell_center(r, c);
    return camera.unproject(px.x(), px.y(), z);
}

void check_rgb(const Image& img, const char* what) {
    if (img.channels() != 3) throw ValidationError(std::string(what) + ": expected an RGB image");
}

}  // namespace

double luminance(const Vec3& rgb) { return 0.2126 * rgb.x() + 0.7152 * rgb.y() + 0.0722 * rgb.z(); }

FeatureGrid extract_patch_features(const Image& image, int stride) {
    check_rgb(image, "extract_patch_features");
    if (stride < 1) throw ValidationError("extract_patch_features: stride must be >= 1");
    const int w = image.width(), h = image.height();
    const int rows = (h + stride - 1) / stride, cols = (w + stride - 1) / stride;
    std::vector<double> lum(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) lum[static_cast<std::size_t>(y) * w + x] = luminance(pixel_rgb(image, x, y));
    }
    auto L = [&](int x, int y) {
        x = std::clamp(x, 0, w - 1);
        y = std::clamp(y, 0, h - 1);
        return lum[static_cast<std::size_t>(y) * w + x];
    };
    FeatureGrid g(rows, cols, kFeatureDim, stride);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            double* f = g.cell(r, c);
            const int x0 = c * stride, x1 = std::min(w, x0 + stride);
            const int y0 = r * stride, y1 = std::min(h, y0 + stride);
            const double n = static_cast<double>((x1 - x0) * (y1 - y0));
            Vec3 sum = Vec3::Zero(), sq = Vec3::Zero();
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    const Vec3 p = pixel_rgb(image, x, y);
                    sum += p;
                    sq += p.cwiseProduct(p);
                    const double gx = 0.5 * (L(x + 1, y) - L(x - 1, y));
                    const double gy = 0.5 * (L(x, y + 1) - L(x, y - 1));
                    const double mag = std::hypot(gx, gy);
                    if (mag > 0.0) {
                        const double ang = std::atan2(gy, gx) + std::numbers::pi;
                        const int bin = std::min(7, static_cast<int>(ang / (2.0 * std::numbers::pi) * 8.0));
                        f[6 + bin] += mag;
                    }
                    f[14] += std::fabs(gx);
                    f[15] += std::fabs(gy);
                }
            }
            const Vec3 mean = sum / n;
            for (int j = 0; j < 3; ++j) {
                f[j] = mean[j];
                f[3 + j] = std::sqrt(std::max(0.0, sq[j] / n - mean[j] * mean[j]));
            }
            for (int k = 6; k < kFeatureDim; ++k) f[k] /= n;
        }
    }
    return g;
}

Vec3 edit_color(const Vec3& rgb, const Vec3& world, const EditSpec& spec, std::size_t view_id, double strength) {
    const double s = spec.param("strength") * strength;
    switch (spec.kind) {
        case EditKind::recolor_by_world_position: {
            const int axis = static_cast<int>(spec.param("axis"));
            const double z = (world[axis] - spec.param("center")) / spec.param("width");
            const double w = s / (1.0 + std::exp(-z));
            return (1.0 - w) * rgb + w * unit_luminance(spec.tint()) * luminance(rgb);
        }
        case EditKind::style_tint:
            return (1.0 - s) * rgb + s * rgb.cwiseProduct(spec.tint());
        case EditKind::per_view_random:
            return (1.0 - s) * rgb + s * rgb.cwiseProduct(random_view_tint(spec, view_id));
    }
    return rgb;
}

GaussianMixture apply_edit_3d(const GaussianMixture& mix, const EditSpec& spec, double strength) {
    EditSpec base = spec;
    if (base.kind == EditKind::per_view_random) {
        // the consistent counterpart: the base tint applied everywhere
        base.kind = EditKind::style_tint;
        base.parameters = {{"tint_r", spec.param("tint_r")}, {"tint_g", spec.param("tint_g")},
                           {"tint_b", spec.param("tint_b")}, {"strength", spec.param("strength")}};
    }
    GaussianMixture out = mix;
    for (auto& p : out.primitives()) {
        const Vec3 c(p.sh[0] * kShC0, p.sh[1] * kShC0, p.sh[2] * kShC0);
        const Vec3 e = edit_color(c, p.mean, base, 0, strength);
        for (int j = 0; j < 3; ++j) p.sh[j] = e[j] / kShC0;
    }
    return out;
}

Image decode_color_gain(const FeatureGrid& edited, const FeatureGrid& reference, const Image& source) {
    check_rgb(source, "decode");
    if (!edited.same_shape(reference) || edited.dim() < 3) throw ValidationError("decode: feature grids differ in shape");
    const int s = edited.stride();
    if (edited.cols() != (source.width() + s - 1) / s || edited.rows() != (source.height() + s - 1) / s) {
        throw ValidationError("decode: feature grid does not cover the source image");
    }
    const int rows = edited.rows(), cols = edited.cols();
    // gain - 1 so that unit gains interpolate to exactly zero
    std::vector<Vec3> excess(edited.cell_count());
    for (std::size_t i = 0; i < excess.size(); ++i) {
        for (int j = 0; j < 3; ++j) {
            const double e = edited.cell(i)[j], r = reference.cell(i)[j];
            excess[i][j] = e == r ? 0.0 : (std::max(e, 0.0) + kGainEpsilon) / (std::max(r, 0.0) + kGainEpsilon) - 1.0;
        }
    }
    Image out = source;
    for (int y = 0; y < source.height(); ++y) {
        const double gy = std::clamp((y + 0.5) / s - 0.5, 0.0, rows - 1.0);
        const int r0 = std::min(static_cast<int>(gy), rows - 1), r1 = std::min(r0 + 1, rows - 1);
        const double fy = gy - r0;
        for (int x = 0; x < source.width(); ++x) {
            const double gx = std::clamp((x + 0.5) / s - 0.5, 0.0, cols - 1.0);
            const int c0 = std::min(static_cast<int>(gx), cols - 1), c1 = std::min(c0 + 1, cols - 1);
            const double fx = gx - c0;
            auto at = [&](int r, int c) { return excess[static_cast<std::size_t>(r) * cols + c]; };
            const Vec3 top = (1.0 - fx) * at(r0, c0) + fx * at(r0, c1);
            const Vec3 bot = (1.0 - fx) * at(r1, c0) + fx * at(r1, c1);
            const Vec3 g = (1.0 - fy) * top + fy * bot;
            for (int j = 0; j < 3; ++j) {
                if (g[j] != 0.0) out.at(x, y, j) = std::clamp(source.at(x, y, j) * (1.0 + g[j]), 0.0, 1.0);
            }
        }
    }
    return out;
}

// --------------------------------------------------------- IdentityEditor

FeatureGrid IdentityEditor::extract(const Image& image) const { return extract_patch_features(image, stride_); }

std::vector<FeatureGrid> IdentityEditor::transform(std::span<const FeatureGrid> grids, std::span<const ViewContext>,
                                                   const EditSpec&) const {
    return {grids.begin(), grids.end()};
}

Image IdentityEditor::decode(const FeatureGrid& edited, const FeatureGrid& reference, const Image& source) const {
    return decode_color_gain(edited, reference, source);
}

// ------------------------------------------------------------- MockEditor

MockEditor::MockEditor(MockEditorConfig cfg) : cfg_(cfg) {
    if (cfg_.stride < 1) throw ValidationError("mock editor: stride must be >= 1");
    if (cfg_.stages < 1) throw ValidationError("mock editor: stages must be >= 1");
    if (!(cfg_.sharpness > 0.0)) throw ValidationError("mock editor: sharpness must be positive");
}

FeatureGrid MockEditor::extract(const Image& image) const { return extract_patch_features(image, cfg_.stride); }

std::vector<FeatureGrid> MockEditor::transform(std::span<const FeatureGrid> grids, std::span<const ViewContext> views,
                                               const EditSpec& spec) const {
    if (grids.empty()) return {};
    if (views.size() != grids.size()) throw ValidationError("mock editor: one view context per grid required");
    for (const auto& g : grids) {
        if (!g.same_shape(grids[0]) || g.dim() < 3) throw ValidationError("mock editor: grids differ in shape");
    }
    const std::size_t n = grids.size();

    // Edited color of every cell.
    std::vector<std::vector<Vec3>> target(n);
    for (std::size_t v = 0; v < n; ++v) {
        const FeatureGrid& g = grids[v];
        const ViewContext& ctx = views[v];
        const bool needs_world = spec.kind == EditKind::recolor_by_world_position;
        if (needs_world && (!ctx.camera || !ctx.depth)) {
            throw RuntimeFailure("mock editor: recolor-by-world-position needs camera and depth");
        }
        target[v].resize(g.cell_count());
        for (int r = 0; r < g.rows(); ++r) {
            for (int c = 0; c < g.cols(); ++c) {
                const double* f = g.cell(r, c);
                Vec3 world = Vec3::Zero();
                if (needs_world) world = cell_world_point(g, r, c, *ctx.camera, *ctx.depth);
                target[v][static_cast<std::size_t>(r) * g.cols() + c] =
                    edit_color(Vec3(f[0], f[1], f[2]), world, spec, ctx.view_id, ctx.strength);
            }
        }
    }

    // Attention queries and keys: unit source descriptors.
    std::vector<FeatureGrid> queries, keys;
    if (cfg_.attention) {
        for (const auto& g : grids) {
            FeatureGrid k = g;
            FeatureGrid q = g;
            for (std::size_t i = 0; i < g.cell_count(); ++i) {
                const double norm = feature_norm(g.cell(i), g.dim());
                if (!(norm > 0.0)) continue;
                for (int d = 0; d < g.dim(); ++d) {
                    k.cell(i)[d] = g.cell(i)[d] / norm;
                    q.cell(i)[d] = cfg_.sharpness * k.cell(i)[d];
                }
            }
            queries.push_back(std::move(q));
            keys.push_back(std::move(k));
        }
    }

    std::vector<FeatureGrid> cur(grids.begin(), grids.end());
    const double step = 1.0 / cfg_.stages;
    for (int stage = 0; stage < cfg_.stages; ++stage) {
        for (std::size_t v = 0; v < n; ++v) {
            for (std::size_t i = 0; i < cur[v].cell_count(); ++i) {
                for (int j = 0; j < 3; ++j) cur[v].cell(i)[j] += step * (target[v][i][j] - grids[v].cell(i)[j]);
            }
        }
        if (!cfg_.attention) continue;
        // Attention mixes the edits, not the content: values are the deltas
        // from the source, so a zero edit passes through unchanged.
        std::vector<FeatureGrid> delta = cur;
        for (std::size_t v = 0; v < n; ++v) {
            for (std::size_t i = 0; i < delta[v].values().size(); ++i) delta[v].values()[i] -= grids[v].values()[i];
        }
        for (std::size_t v = 0; v < n; ++v) {
            const FeatureGrid mixed = st_attention(queries, keys, delta, v);
            for (std::size_t i = 0; i < cur[v].values().size(); ++i) {
                cur[v].values()[i] = grids[v].values()[i] + mixed.values()[i];
            }
        }
    }
    return cur;
}

Image MockEditor::decode(const FeatureGrid& edited, const FeatureGrid& reference, const Image& source) const {
    return decode_color_gain(edited, reference, source);
}

}  // namespace dge
