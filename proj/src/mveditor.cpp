// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#include "dge/mveditor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <tuple>

#include "dge/simd/kernels.hpp"

namespace dge {

// ------------------------------------------------------------ FeatureGrid

FeatureGrid::FeatureGrid(int rows, int cols, int dim, int stride)
    : rows_(rows), cols_(cols), dim_(dim), stride_(stride) {
    if (rows < 1 || cols < 1 || dim < 1) throw ValidationError("feature grid: dimensions must be positive");
    if (stride < 1) throw ValidationError("feature grid: stride must be >= 1");
    data_.assign(static_cast<std::size_t>(rows) * cols * dim, 0.0);
}

void FeatureGrid::validate() const {
    if (rows_ < 1 || cols_ < 1 || dim_ < 1 || stride_ < 1) throw ValidationError("feature grid: bad shape");
    if (data_.size() != cell_count() * dim_) throw ValidationError("feature grid: data size mismatch");
    for (double v : data_) {
        if (!std::isfinite(v)) throw ValidationError("feature grid: non-finite value");
    }
}

Image FeatureGrid::to_image() const {
    Image img(cols_, rows_, dim_);
    img.values() = data_;
    return img;
}

FeatureGrid FeatureGrid::from_image(const Image& image, int stride) {
    FeatureGrid g(image.height(), image.width(), image.channels(), stride);
    g.data_ = image.values();
    return g;
}

double feature_norm(const double* a, int dim) {
    return std::sqrt(simd::kernels().dot(a, a, static_cast<std::size_t>(dim)));
}

namespace {

double cosine_from(double dot, double na, double nb) { return 1.0 - dot / (na * nb); }

}  // namespace

double cosine_distance(const double* a, const double* b, int dim) {
    const auto& k = simd::kernels();
    const std::size_t n = static_cast<std::size_t>(dim);
    return cosine_from(k.dot(a, b, n), feature_norm(a, dim), feature_norm(b, dim));
}

// ---------------------------------------------------------------- matching

namespace {

void require_same_shape(const FeatureGrid& a, const FeatureGrid& b, const char* what) {
    if (!a.same_shape(b)) throw ValidationError(std::string(what) + ": feature grids differ in shape");
}

/// Lexicographic candidate key; smaller wins.
struct Rank {
    double distance;
    double line;
    std::size_t index;
    bool operator<(const Rank& o) const {
        return std::tie(distance, line, index) < std::tie(o.distance, o.line, o.index);
    }
};

CellMatch nearest_to_line(const FeatureGrid& g, const EpipolarLine& line) {
    Rank best{0.0, std::numeric_limits<double>::infinity(), 0};
    for (int r = 0; r < g.rows(); ++r) {
        for (int c = 0; c < g.cols(); ++c) {
            const Rank cand{0.0, point_line_distance(line, g.cell_center(r, c)), static_cast<std::size_t>(r) * g.cols() + c};
            if (cand < best) best = cand;
        }
    }
    return {static_cast<int>(best.index / g.cols()), static_cast<int>(best.index % g.cols()), best.line,
            MatchFlag::fallback};
}

/// Best cell of k for query q over all cells, by (distance, index). Returns
/// false when nothing is usable.
bool best_anywhere(const double* q, double qn, const FeatureGrid& k, const std::vector<double>& knorm,
                   CellMatch& out) {
    const auto& kern = simd::kernels();
    const std::size_t dim = static_cast<std::size_t>(k.dim());
    bool found = false;
    Rank best{};
    for (std::size_t j = 0; j < k.cell_count(); ++j) {
        if (!(knorm[j] > 0.0)) continue;
        const Rank cand{cosine_from(kern.dot(q, k.cell(j), dim), qn, knorm[j]), 0.0, j};
        if (!found || cand < best) {
            best = cand;
            found = true;
        }
    }
    if (found) {
        out.row = static_cast<int>(best.index / k.cols());
        out.col = static_cast<int>(best.index % k.cols());
        out.distance = best.distance;
    }
    return found;
}

std::vector<double> norms(const FeatureGrid& g) {
    std::vector<double> n(g.cell_count());
    for (std::size_t j = 0; j < n.size(); ++j) n[j] = feature_norm(g.cell(j), g.dim());
    return n;
}

CellMatch same_position(int r, int c, MatchFlag flag) { return {r, c, 0.0, flag}; }

}  // namespace

MatchResult match_unconstrained(const FeatureGrid& feat_t, const FeatureGrid& feat_k) {
    require_same_shape(feat_t, feat_k, "match_unconstrained");
    const auto knorm = norms(feat_k);
    MatchResult res;
    res.cells.reserve(feat_t.cell_count());
    for (int r = 0; r < feat_t.rows(); ++r) {
        for (int c = 0; c < feat_t.cols(); ++c) {
            const double* q = feat_t.cell(r, c);
            const double qn = feature_norm(q, feat_t.dim());
            CellMatch m;
            if (!(qn > 0.0) || !best_anywhere(q, qn, feat_k, knorm, m)) {
                m = same_position(r, c, MatchFlag::fallback);
                ++res.fallback_count;
            }
            res.cells.push_back(m);
        }
    }
    return res;
}

MatchResult match_epipolar(const FeatureGrid& feat_t, const FeatureGrid& feat_k, const Mat3& F, double band) {
    require_same_shape(feat_t, feat_k, "match_epipolar");
    if (!(band > 0.0)) throw ValidationError("match_epipolar: band must be positive");
    const auto& kern = simd::kernels();
    const std::size_t dim = static_cast<std::size_t>(feat_k.dim());
    const auto knorm = norms(feat_k);
    const double s = feat_k.stride();
    const int rows = feat_k.rows(), cols = feat_k.cols();
    MatchResult res;
    res.cells.reserve(feat_t.cell_count());
    std::vector<std::size_t> cand;
    for (int r = 0; r < feat_t.rows(); ++r) {
        for (int c = 0; c < feat_t.cols(); ++c) {
            const double* q = feat_t.cell(r, c);
            const double qn = feature_norm(q, feat_t.dim());
            const auto line = epipolar_line(F, feat_t.cell_center(r, c));
            if (!line) {
                CellMatch m;
                if (!(qn > 0.0) || !best_anywhere(q, qn, feat_k, knorm, m)) m = same_position(r, c, MatchFlag::epipole);
                m.flag = MatchFlag::epipole;
                ++res.epipole_count;
                res.cells.push_back(m);
                continue;
            }
            // Walk the band: along whichever axis the line is flatter, solve
            // for the range of cell centers it can reach, pad by one cell and
            // let the exact distance test decide.
            cand.clear();
            const bool by_col = std::fabs(line->b) >= std::fabs(line->a);
            const int outer = by_col ? cols : rows;
            const int inner = by_col ? rows : cols;
            const double slope = by_col ? line->b : line->a;
            for (int o = 0; o < outer; ++o) {
                const double po = (o + 0.5) * s;
                const double other = by_col ? line->a : line->b;
                const double mid = -(other * po + line->c) / slope;
                const double half = band / std::fabs(slope);
                const int lo = std::max(0, static_cast<int>(std::floor((mid - half) / s - 0.5)) - 1);
                const int hi = std::min(inner - 1, static_cast<int>(std::ceil((mid + half) / s - 0.5)) + 1);
                for (int i = lo; i <= hi; ++i) {
                    const int cr = by_col ? i : o;
                    const int cc = by_col ? o : i;
                    if (point_line_distance(*line, feat_k.cell_center(cr, cc)) <= band) {
                        cand.push_back(static_cast<std::size_t>(cr) * cols + cc);
                    }
                }
            }
            bool found = false;
            Rank best{};
            if (qn > 0.0) {
                for (std::size_t j : cand) {
                    if (!(knorm[j] > 0.0)) continue;
                    const int cr = static_cast<int>(j / cols), cc = static_cast<int>(j % cols);
                    const Rank rk{cosine_from(kern.dot(q, feat_k.cell(j), dim), qn, knorm[j]),
                                  point_line_distance(*line, feat_k.cell_center(cr, cc)), j};
                    if (!found || rk < best) {
                        best = rk;
                        found = true;
                    }
                }
            }
            if (found) {
                res.cells.push_back({static_cast<int>(best.index / cols), static_cast<int>(best.index % cols),
                                     best.distance, MatchFlag::none});
            } else {
                res.cells.push_back(nearest_to_line(feat_k, *line));
                ++res.fallback_count;
            }
        }
    }
    return res;
}

// --------------------------------------------------------- correspondences

void CorrespondenceMap::validate(std::size_t key_count, int key_rows, int key_cols) const {
    if (cells.size() != static_cast<std::size_t>(rows) * cols) throw ValidationError("correspondence map: size mismatch");
    for (const auto& cell : cells) {
        double sum = 0.0;
        for (const auto& e : cell) {
            if (e.key >= key_count || e.row < 0 || e.row >= key_rows || e.col < 0 || e.col >= key_cols) {
                throw ValidationError("correspondence map: reference out of range");
            }
            if (!(e.weight >= 0.0)) throw ValidationError("correspondence map: negative weight");
            sum += e.weight;
        }
        if (std::fabs(sum - 1.0) > 1e-12) throw ValidationError("correspondence map: weights must sum to 1");
    }
}

std::pair<double, double> blend_weights(double theta1, double theta2) {
    const double a = 1.0 / (theta1 + 1e-6);
    const double b = 1.0 / (theta2 + 1e-6);
    return {a / (a + b), b / (a + b)};
}

namespace {

std::size_t key_slot(std::span<const std::size_t> keys, std::size_t view) {
    return static_cast<std::size_t>(std::find(keys.begin(), keys.end(), view) - keys.begin());
}

MatchResult match_one(std::size_t t, std::size_t k, const FeatureGrid& feat_t, const FeatureGrid& feat_k,
                      std::span<const Camera> cameras, double band, bool epipolar) {
    if (!epipolar) return match_unconstrained(feat_t, feat_k);
    return match_epipolar(feat_t, feat_k, fundamental_matrix(cameras[t], cameras[k]), band);
}

}  // namespace

CorrespondenceMap correspond(std::size_t t, const FeatureGrid& feat_t, std::span<const FeatureGrid> key_feats,
                             std::span<const Camera> cameras, std::span<const std::size_t> keys,
                             const MatchOptions& opts) {
    if (key_feats.size() != keys.size()) throw ValidationError("correspond: one feature grid per key required");
    const auto [k1, k2] = nearest_key_views(t, keys, cameras);
    const std::size_t s1 = key_slot(keys, k1), s2 = key_slot(keys, k2);
    const double band = opts.band > 0.0 ? opts.band : 1.5 * feat_t.stride();

    CorrespondenceMap map;
    map.rows = feat_t.rows();
    map.cols = feat_t.cols();
    map.cells.resize(feat_t.cell_count());
    const MatchResult m1 = match_one(t, k1, feat_t, key_feats[s1], cameras, band, opts.epipolar);
    map.fallback_count += m1.fallback_count;
    map.epipole_count += m1.epipole_count;
    if (k1 == k2) {
        for (std::size_t i = 0; i < map.cells.size(); ++i) {
            map.cells[i][0] = {s1, m1.cells[i].row, m1.cells[i].col, 1.0};
            map.cells[i][1] = {s1, m1.cells[i].row, m1.cells[i].col, 0.0};
        }
        return map;
    }
    const MatchResult m2 = match_one(t, k2, feat_t, key_feats[s2], cameras, band, opts.epipolar);
    map.fallback_count += m2.fallback_count;
    map.epipole_count += m2.epipole_count;
    const auto [w1, w2] = blend_weights(forward_angle(cameras[t], cameras[k1]), forward_angle(cameras[t], cameras[k2]));
    for (std::size_t i = 0; i < map.cells.size(); ++i) {
        map.cells[i][0] = {s1, m1.cells[i].row, m1.cells[i].col, w1};
        map.cells[i][1] = {s2, m2.cells[i].row, m2.cells[i].col, w2};
    }
    return map;
}

FeatureGrid blend_correspondences(const CorrespondenceMap& map, std::span<const FeatureGrid> grids) {
    if (grids.empty()) throw ValidationError("blend_correspondences: no key grids");
    for (const auto& g : grids) require_same_shape(g, grids[0], "blend_correspondences");
    map.validate(grids.size(), grids[0].rows(), grids[0].cols());
    const int dim = grids[0].dim();
    FeatureGrid out(map.rows, map.cols, dim, grids[0].stride());
    for (std::size_t i = 0; i < map.cells.size(); ++i) {
        const auto& [e1, e2] = map.cells[i];
        const double* a = grids[e1.key].cell(e1.row, e1.col);
        const double* b = grids[e2.key].cell(e2.row, e2.col);
        double* o = out.cell(i);
        for (int d = 0; d < dim; ++d) o[d] = e1.weight * a[d] + e2.weight * b[d];
    }
    return out;
}

FeatureGrid inject_features(std::size_t t, const FeatureGrid& feat_t, std::span<const FeatureGrid> key_feats,
                            std::span<const Camera> cameras, std::span<const std::size_t> keys,
                            const MatchOptions& opts) {
    return blend_correspondences(correspond(t, feat_t, key_feats, cameras, keys, opts), key_feats);
}

Injection inject_features(std::size_t t, const FeatureGrid& feat_t, std::span<const FeatureGrid> key_source,
                          std::span<const FeatureGrid> key_edited, std::span<const Camera> cameras,
                          std::span<const std::size_t> keys, const MatchOptions& opts) {
    if (key_source.size() != key_edited.size()) throw ValidationError("inject_features: key grid counts differ");
    Injection out;
    out.map = correspond(t, feat_t, key_source, cameras, keys, opts);
    out.features = blend_correspondences(out.map, key_edited);
    out.reference = blend_correspondences(out.map, key_source);
    return out;
}

// ---------------------------------------------------------------- attention

namespace {

void check_attention_inputs(std::span<const FeatureGrid> queries, std::span<const FeatureGrid> keys, std::size_t t) {
    if (queries.empty() || queries.size() != keys.size()) throw ValidationError("st_attention: need one key grid per query grid");
    if (t >= queries.size()) throw ValidationError("st_attention: view index outside the key set");
    const int d = queries[0].dim();
    for (std::size_t i = 0; i < queries.size(); ++i) {
        if (queries[i].dim() != d || keys[i].dim() != d) throw ValidationError("st_attention: dimension mismatch");
    }
}

/// Softmax logits of one query row against all key cells.
void attention_row(const double* q, std::span<const FeatureGrid> keys, double scale, std::vector<double>& w) {
    const auto& kern = simd::kernels();
    w.clear();
    for (const auto& g : keys) {
        for (std::size_t j = 0; j < g.cell_count(); ++j) {
            w.push_back(kern.dot(q, g.cell(j), static_cast<std::size_t>(g.dim())) * scale);
        }
    }
    const double mx = *std::max_element(w.begin(), w.end());
    double sum = 0.0;
    for (double& v : w) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : w) v /= sum;
}

}  // namespace

std::vector<double> st_attention_weights(std::span<const FeatureGrid> queries, std::span<const FeatureGrid> keys,
                                         std::size_t t) {
    check_attention_inputs(queries, keys, t);
    const FeatureGrid& q = queries[t];
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.dim()));
    std::vector<double> out, row;
    for (std::size_t i = 0; i < q.cell_count(); ++i) {
        attention_row(q.cell(i), keys, scale, row);
        out.insert(out.end(), row.begin(), row.end());
    }
    return out;
}

FeatureGrid st_attention(std::span<const FeatureGrid> queries, std::span<const FeatureGrid> keys,
                         std::span<const FeatureGrid> values, std::size_t t) {
    check_attention_inputs(queries, keys, t);
    if (values.size() != keys.size()) throw ValidationError("st_attention: need one value grid per key grid");
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (values[i].cell_count() != keys[i].cell_count()) throw ValidationError("st_attention: key/value cell counts differ");
        if (values[i].dim() != values[0].dim()) throw ValidationError("st_attention: value dimension mismatch");
    }
    const auto& kern = simd::kernels();
    const FeatureGrid& q = queries[t];
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.dim()));
    const int vdim = values[0].dim();
    FeatureGrid out(q.rows(), q.cols(), vdim, q.stride());
    std::vector<double> row;
    for (std::size_t i = 0; i < q.cell_count(); ++i) {
        attention_row(q.cell(i), keys, scale, row);
        double* o = out.cell(i);
        std::size_t j = 0;
        for (const auto& g : values) {
            for (std::size_t c = 0; c < g.cell_count(); ++c, ++j) {
                if (row[j] != 0.0) kern.axpy(row[j], g.cell(c), o, static_cast<std::size_t>(vdim));
            }
        }
    }
    return out;
}

// ------------------------------------------------------------------- edits

std::string to_string(EditKind kind) {
    switch (kind) {
        case EditKind::recolor_by_world_position: return "recolor-by-world-position";
        case EditKind::style_tint: return "style-tint";
        case EditKind::per_view_random: return "per-view-random";
    }
    return "unknown";
}

EditKind edit_kind_from_string(const std::string& name) {
    for (EditKind k : {EditKind::recolor_by_world_position, EditKind::style_tint, EditKind::per_view_random}) {
        if (name == to_string(k)) return k;
    }
    throw ValidationError("edit spec: unknown kind '" + name + "'");
}

namespace {

const std::map<std::string, double>& defaults(EditKind kind) {
    static const std::map<std::string, double> recolor{{"tint_r", 1.0}, {"tint_g", 0.2}, {"tint_b", 0.2},
                                                       {"axis", 0.0},   {"center", 0.0}, {"width", 0.1},
                                                       {"strength", 1.0}};
    static const std::map<std::string, double> tint{{"tint_r", 1.0}, {"tint_g", 0.6}, {"tint_b", 0.3}, {"strength", 1.0}};
    static const std::map<std::string, double> random{{"tint_r", 1.0}, {"tint_g", 0.7}, {"tint_b", 0.5},
                                                      {"amplitude", 0.6}, {"strength", 1.0}};
    switch (kind) {
        case EditKind::recolor_by_world_position: return recolor;
        case EditKind::style_tint: return tint;
        case EditKind::per_view_random: return random;
    }
    return tint;
}

}  // namespace

void EditSpec::normalize() {
    const auto& def = defaults(kind);
    for (const auto& [name, value] : parameters) {
        if (!def.contains(name)) throw ValidationError("edit spec: unknown parameter '" + name + "' for " + to_string(kind));
        if (!std::isfinite(value)) throw ValidationError("edit spec: parameter '" + name + "' must be finite");
    }
    for (const auto& [name, value] : def) parameters.try_emplace(name, value);
    for (const char* t : {"tint_r", "tint_g", "tint_b"}) {
        if (parameters.at(t) < 0.0) throw ValidationError("edit spec: tint components must be >= 0");
    }
    if (tint().isZero(0.0)) throw ValidationError("edit spec: tint must not be black");
    if (parameters.at("strength") < 0.0) throw ValidationError("edit spec: strength must be >= 0");
    if (kind == EditKind::recolor_by_world_position) {
        const double axis = parameters.at("axis");
        if (axis != 0.0 && axis != 1.0 && axis != 2.0) throw ValidationError("edit spec: axis must be 0, 1 or 2");
        if (!(parameters.at("width") > 0.0)) throw ValidationError("edit spec: width must be positive");
    }
    if (kind == EditKind::per_view_random && parameters.at("amplitude") < 0.0) {
        throw ValidationError("edit spec: amplitude must be >= 0");
    }
}

double EditSpec::param(const std::string& name) const {
    if (auto it = parameters.find(name); it != parameters.end()) return it->second;
    const auto& def = defaults(kind);
    if (auto it = def.find(name); it != def.end()) return it->second;
    throw ValidationError("edit spec: no parameter '" + name + "' for " + to_string(kind));
}

Vec3 EditSpec::tint() const { return Vec3(param("tint_r"), param("tint_g"), param("tint_b")); }

nlohmann::json EditSpec::to_json() const {
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [k, v] : parameters) params[k] = v;
    return {{"kind", to_string(kind)}, {"parameters", params}, {"seed", seed}};
}

EditSpec EditSpec::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("edit spec: expected a JSON object");
    EditSpec spec;
    try {
        spec.kind = edit_kind_from_string(j.at("kind").get<std::string>());
        if (j.contains("parameters")) {
            for (const auto& [k, v] : j.at("parameters").items()) spec.parameters[k] = v.get<double>();
        }
        if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("edit spec: ") + e.what());
    }
    spec.normalize();
    return spec;
}

// ----------------------------------------------------------------- editing

ViewSequence ViewSequence::sorted(std::vector<Camera> cameras, std::vector<Image> images, std::vector<Image> depths) {
    if (cameras.size() != images.size()) throw ValidationError("view sequence: one image per camera required");
    if (!depths.empty() && depths.size() != cameras.size()) throw ValidationError("view sequence: one depth per camera required");
    const auto order = sort_cameras(cameras);
    ViewSequence seq;
    for (std::size_t i : order) {
        seq.cameras.push_back(cameras[i]);
        seq.images.push_back(std::move(images[i]));
        if (!depths.empty()) seq.depths.push_back(std::move(depths[i]));
        seq.ids.push_back(i);
    }
    seq.validate();
    return seq;
}

void ViewSequence::validate(std::size_t min_views) const {
    if (cameras.size() < min_views) throw ValidationError("view sequence: not enough views");
    if (images.size() != cameras.size() || ids.size() != cameras.size()) throw ValidationError("view sequence: ragged views");
    if (!depths.empty() && depths.size() != cameras.size()) throw ValidationError("view sequence: ragged depths");
    for (std::size_t t = 0; t < cameras.size(); ++t) {
        const Image& img = images[t];
        if (img.width() != images[0].width() || img.height() != images[0].height() || img.channels() != 3) {
            throw ValidationError("view sequence: images must share one RGB size");
        }
        if (img.width() != cameras[t].width() || img.height() != cameras[t].height()) {
            throw ValidationError("view sequence: image size differs from camera " + std::to_string(t));
        }
        if (!depths.empty() && (depths[t].width() != img.width() || depths[t].height() != img.height() ||
                                depths[t].channels() != 1)) {
            throw ValidationError("view sequence: depth size differs at view " + std::to_string(t));
        }
    }
}

ViewContext ViewSequence::context(std::size_t t, double strength) const {
    return {ids[t], &cameras[t], depths.empty() ? nullptr : &depths[t], strength};
}

std::vector<std::size_t> select_key_views(std::size_t count, std::size_t density, std::uint64_t seed) {
    if (count < 1) throw ValidationError("select_key_views: need at least one view");
    if (density < 1) throw ValidationError("select_key_views: density must be >= 1");
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> keys;
    for (std::size_t start = 0; start < count; start += density) {
        const std::size_t len = std::min(density, count - start);
        keys.push_back(start + static_cast<std::size_t>(rng() % len));
    }
    return keys;
}

namespace {

template <typename Fn>
auto at_view(std::size_t t, Fn&& fn) {
    try {
        return fn();
    } catch (const ValidationError& e) {
        throw ValidationError("view " + std::to_string(t) + ": " + e.what());
    } catch (const std::exception& e) {
        throw RuntimeFailure("view " + std::to_string(t) + ": " + e.what());
    }
}

}  // namespace

EditResult edit_sequence(const ViewSequence& seq, const EditSpec& spec, const Editor& editor, const EditOptions& opts) {
    seq.validate();
    const std::size_t n = seq.size();
    EditResult res;
    res.keys = select_key_views(n, opts.key_density, opts.seed);
    res.images.resize(n);
    res.maps.resize(n);

    std::vector<FeatureGrid> source(n);
    for (std::size_t t = 0; t < n; ++t) source[t] = at_view(t, [&] { return editor.extract(seq.images[t]); });

    std::vector<FeatureGrid> key_source;
    std::vector<ViewContext> key_ctx;
    for (std::size_t k : res.keys) {
        key_source.push_back(source[k]);
        key_ctx.push_back(seq.context(k, opts.strength));
    }
    const std::vector<FeatureGrid> key_edited = at_view(res.keys.front(), [&] { return editor.transform(key_source, key_ctx, spec); });
    if (key_edited.size() != key_source.size()) throw RuntimeFailure("editor returned the wrong number of key grids");
    for (std::size_t i = 0; i < res.keys.size(); ++i) {
        const std::size_t k = res.keys[i];
        res.images[k] = at_view(k, [&] { return editor.decode(key_edited[i], key_source[i], seq.images[k]); });
    }

    for (std::size_t t = 0; t < n; ++t) {
        if (std::find(res.keys.begin(), res.keys.end(), t) != res.keys.end()) continue;
        Injection inj = at_view(t, [&] {
            return inject_features(t, source[t], key_source, key_edited, seq.cameras, res.keys, opts.match);
        });
        res.images[t] = at_view(t, [&] { return editor.decode(inj.features, inj.reference, seq.images[t]); });
        res.fallback_count += inj.map.fallback_count;
        res.epipole_count += inj.map.epipole_count;
        res.maps[t] = std::move(inj.map);
    }
    return res;
}

EditResult edit_independently(const ViewSequence& seq, const EditSpec& spec, const Editor& editor, double strength) {
    seq.validate();
    EditResult res;
    res.maps.resize(seq.size());
    for (std::size_t t = 0; t < seq.size(); ++t) {
        res.images.push_back(at_view(t, [&] {
            const FeatureGrid src = editor.extract(seq.images[t]);
            const ViewContext ctx = seq.context(t, strength);
            const auto edited = editor.transform(std::span<const FeatureGrid>(&src, 1), std::span<const ViewContext>(&ctx, 1), spec);
            if (edited.size() != 1) throw RuntimeFailure("editor returned the wrong number of grids");
            return editor.decode(edited[0], src, seq.images[t]);
        }));
    }
    return res;
}

}  // namespace dge
