// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dge/geometry.hpp"
#include "dge/image.hpp"

namespace dge {

/// rows x cols grid of dim-dimensional features. Cell (r, c) covers pixels
/// [c*stride, (c+1)*stride) x [r*stride, (r+1)*stride) and its center maps to
/// pixel ((c + 0.5) * stride, (r + 0.5) * stride).
class FeatureGrid {
  public:
    FeatureGrid() = default;
    FeatureGrid(int rows, int cols, int dim, int stride);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int dim() const { return dim_; }
    int stride() const { return stride_; }
    std::size_t cell_count() const { return static_cast<std::size_t>(rows_) * cols_; }

    double* cell(std::size_t index) { return data_.data() + index * dim_; }
    const double* cell(std::size_t index) const { return data_.data() + index * dim_; }
    double* cell(int r, int c) { return cell(static_cast<std::size_t>(r) * cols_ + c); }
    const double* cell(int r, int c) const { return cell(static_cast<std::size_t>(r) * cols_ + c); }
    Vec2 cell_center(int r, int c) const { return Vec2((c + 0.5) * stride_, (r + 0.5) * stride_); }

    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }
    bool same_shape(const FeatureGrid& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && dim_ == o.dim_ && stride_ == o.stride_;
    }
    void validate() const;

    /// As a cols x rows image with dim channels (for DGEIMG1 dumps).
    Image to_image() const;
    static FeatureGrid from_image(const Image& image, int stride);

    friend bool operator==(const FeatureGrid&, const FeatureGrid&) = default;

  private:
    int rows_ = 0;
    int cols_ = 0;
    int dim_ = 0;
    int stride_ = 1;
    std::vector<double> data_;
};

/// 1 - a.b / (|a| |b|). Callers must exclude zero-norm vectors.
double cosine_distance(const double* a, const double* b, int dim);
double feature_norm(const double* a, int dim);

// ---------------------------------------------------------------- matching

enum class MatchFlag : std::uint8_t {
    none,      ///< best candidate inside the epipolar band
    fallback,  ///< no usable candidate; nearest cell to the line (or same cell)
    epipole,   ///< query sits on the epipole; unconstrained search
};

struct CellMatch {
    int row = 0;
    int col = 0;
    double distance = 0.0;  ///< cosine distance, or the line distance for fallbacks
    MatchFlag flag = MatchFlag::none;
    friend bool operator==(const CellMatch&, const CellMatch&) = default;
};

struct MatchResult {
    std::vector<CellMatch> cells;  ///< one per cell of the query grid, row-major
    std::size_t fallback_count = 0;
    std::size_t epipole_count = 0;
};

/// Epipolar-constrained correspondence from grid t to grid k, where F maps
/// pixels of view t to lines in view k. Candidates are the cells of k whose
/// centers lie within `band` pixels of the line F*u. The winner minimizes
/// (cosine distance, distance to the line, cell index) lexicographically.
/// Zero-norm candidates are skipped; if none remain (or the query itself has
/// zero norm) the cell nearest the line is returned and flagged fallback.
/// At the epipole the search runs over all cells and is flagged epipole.
MatchResult match_epipolar(const FeatureGrid& feat_t, const FeatureGrid& feat_k, const Mat3& F, double band);

/// Exhaustive search over every cell of k, minimizing (cosine distance, cell
/// index). A zero-norm query maps to the same grid position (flagged
/// fallback).
MatchResult match_unconstrained(const FeatureGrid& feat_t, const FeatureGrid& feat_k);

// --------------------------------------------------------- correspondences

struct Correspondence {
    std::size_t key = 0;  ///< index into the key list
    int row = 0;
    int col = 0;
    double weight = 0.0;
};

/// Per cell of a non-key view: matches in its two nearest key views with
/// weights summing to one. With a single key the second entry repeats the
/// first with weight zero.
struct CorrespondenceMap {
    int rows = 0;
    int cols = 0;
    std::vector<std::array<Correspondence, 2>> cells;
    std::size_t fallback_count = 0;
    std::size_t epipole_count = 0;

    void validate(std::size_t key_count, int key_rows, int key_cols) const;
};

/// Blend weights for the two nearest keys at angles theta1, theta2:
/// w_i proportional to 1 / (theta_i + 1e-6).
std::pair<double, double> blend_weights(double theta1, double theta2);

struct MatchOptions {
    double band = 0.0;     ///< pixels; <= 0 selects 1.5 feature strides
    bool epipolar = true;  ///< false: unconstrained appearance matching
};

/// Correspondences from view t into its two nearest key views. Matching uses
/// `key_feats` (which should describe the same, unedited content as
/// `feat_t`). `keys[i]` is the view index of `key_feats[i]` in `cameras`.
CorrespondenceMap correspond(std::size_t t, const FeatureGrid& feat_t, std::span<const FeatureGrid> key_feats,
                             std::span<const Camera> cameras, std::span<const std::size_t> keys,
                             const MatchOptions& opts = {});

/// Output cell = sum of weight * grids[key][row, col] over the two entries.
FeatureGrid blend_correspondences(const CorrespondenceMap& map, std::span<const FeatureGrid> grids);

/// Feature injection: matches feat_t against `key_feats` and returns the
/// blended key features.
FeatureGrid inject_features(std::size_t t, const FeatureGrid& feat_t, std::span<const FeatureGrid> key_feats,
                            std::span<const Camera> cameras, std::span<const std::size_t> keys,
                            const MatchOptions& opts = {});

struct Injection {
    FeatureGrid features;   ///< blend of edited key features
    FeatureGrid reference;  ///< blend of source key features, same correspondences
    CorrespondenceMap map;
};

/// Injection where correspondences are found on the source (unedited) key
/// features and then used to transport the edited ones.
Injection inject_features(std::size_t t, const FeatureGrid& feat_t, std::span<const FeatureGrid> key_source,
                          std::span<const FeatureGrid> key_edited, std::span<const Camera> cameras,
                          std::span<const std::size_t> keys, const MatchOptions& opts = {});

// ---------------------------------------------------------------- attention

/// Phi_t = softmax(Q_t [K_1 .. K_n]^T / sqrt(d)) [V_1 .. V_n], where the
/// concatenation runs over the cells of every grid in the key set and
/// `t` indexes the query grid within `queries`.
FeatureGrid st_attention(std::span<const FeatureGrid> queries, std::span<const FeatureGrid> keys,
                         std::span<const FeatureGrid> values, std::size_t t);

/// The softmax matrix of st_attention, row-major (cells of t) x (all cells).
std::vector<double> st_attention_weights(std::span<const FeatureGrid> queries, std::span<const FeatureGrid> keys,
                                         std::size_t t);

// ------------------------------------------------------------------- edits

enum class EditKind { recolor_by_world_position, style_tint, per_view_random };

std::string to_string(EditKind kind);
EditKind edit_kind_from_string(const std::string& name);

/// A deterministic mock edit. Parameters by kind (defaults in brackets):
///   recolor-by-world-position: tint_r/g/b [1, 0.2, 0.2], axis [0], center
///     [0], width [0.1], strength [1]
///   style-tint: tint_r/g/b [1, 0.6, 0.3], strength [1]
///   per-view-random: tint_r/g/b [1, 0.7, 0.5], amplitude [0.6], strength [1]
struct EditSpec {
    EditKind kind = EditKind::style_tint;
    std::map<std::string, double> parameters;
    std::uint64_t seed = 0;

    /// Fills missing parameters with defaults and checks them.
    void normalize();
    double param(const std::string& name) const;
    Vec3 tint() const;

    nlohmann::json to_json() const;
    static EditSpec from_json(const nlohmann::json& j);
};

// ------------------------------------------------------------------ editor

/// What an editor may know about the view it is editing.
struct ViewContext {
    std::size_t view_id = 0;        ///< stable id of the view (original camera index)
    const Camera* camera = nullptr;
    const Image* depth = nullptr;   ///< render_depth of the unedited scene, if available
    double strength = 1.0;          ///< multiplies the spec's own strength
};

/// Pluggable 2D editor: extract -> transform -> decode.
class Editor {
  public:
    virtual ~Editor() = default;
    virtual FeatureGrid extract(const Image& image) const = 0;
    /// Edits a set of grids jointly. With several grids, cross-view coupling
    /// (st_attention) happens in here.
    virtual std::vector<FeatureGrid> transform(std::span<const FeatureGrid> grids,
                                               std::span<const ViewContext> views,
                                               const EditSpec& spec) const = 0;
    /// Image for `edited` features given the features `reference` that
    /// describe `source` before editing.
    virtual Image decode(const FeatureGrid& edited, const FeatureGrid& reference, const Image& source) const = 0;
};

/// Views in trajectory order. `ids[t]` is the original index of view t.
struct ViewSequence {
    std::vector<Camera> cameras;
    std::vector<Image> images;
    std::vector<Image> depths;  ///< optional; empty or one per view
    std::vector<std::size_t> ids;

    /// Reorders by sort_cameras.
    static ViewSequence sorted(std::vector<Camera> cameras, std::vector<Image> images,
                               std::vector<Image> depths = {});
    std::size_t size() const { return cameras.size(); }
    void validate(std::size_t min_views = 1) const;
    ViewContext context(std::size_t t, double strength = 1.0) const;
};

/// One key per consecutive block of `density` frames, uniform within the
/// block, from a generator seeded with `seed`.
std::vector<std::size_t> select_key_views(std::size_t count, std::size_t density, std::uint64_t seed);

struct EditOptions {
    std::size_t key_density = 5;
    MatchOptions match{};
    std::uint64_t seed = 0;
    double strength = 1.0;
};

struct EditResult {
    std::vector<Image> images;  ///< in sequence order
    std::vector<std::size_t> keys;
    std::vector<CorrespondenceMap> maps;  ///< per view; empty for keys
    std::size_t fallback_count = 0;
    std::size_t epipole_count = 0;
};

/// Key views are edited jointly; every other view receives features injected
/// from its two nearest edited keys and is decoded on its own image.
EditResult edit_sequence(const ViewSequence& seq, const EditSpec& spec, const Editor& editor,
                         const EditOptions& opts = {});

/// Baseline: every view edited on its own, no coupling.
EditResult edit_independently(const ViewSequence& seq, const EditSpec& spec, const Editor& editor,
                              double strength = 1.0);

}  // namespace dge
