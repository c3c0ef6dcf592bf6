// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

// Runs every acceptance criterion and prints one PASS/FAIL line each.
// Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "dge/editors.hpp"
#include "dge/fitter.hpp"
#include "dge/harness.hpp"
#include "dge/io.hpp"
#include "dge/mveditor.hpp"
#include "dge/renderer.hpp"
#include "test_util.hpp"

using namespace dge;
using namespace dge::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double linf(const Image& a, const Image& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.values()[i] - b.values()[i]));
    return m;
}

std::vector<Image> render_all(const GaussianMixture& mix, std::span<const Camera> cams, const RenderConfig& cfg = {}) {
    std::vector<Image> out;
    for (const auto& c : cams) out.push_back(splat_render(mix, c, cfg));
    return out;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(DGE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// ------------------------------------------------------------ 1. renderer

Outcome renderer_oracle() {
    const auto start = Clock::now();
    Rng rng(1001);
    RenderConfig cfg;
    cfg.near = 0.5;
    cfg.far = 6.0;
    cfg.steps = 4096;
    double worst = 0.0;
    std::size_t max_count = 0;
    for (int scene = 0; scene < 10; ++scene) {
        const int want = 10 + 6 * scene;  // 10 .. 64
        const GaussianMixture mix = separated_scene(rng, want, 0.8, 0.03, 0.06, 0.5, 8.0, scene % 3, 4.0);
        max_count = std::max(max_count, mix.size());
        const Camera cam = random_view(rng, square_intrinsics(64, 64.0), 3.0);
        worst = std::max(worst, linf(splat_render(mix, cam, cfg), raymarch_render(mix, cam, cfg)));
    }
    const double t = seconds_since(start);
    return {worst <= 2e-2 && max_count <= 64 && t <= 120.0,
            fmt("max L-inf %.3g (tol 2e-2) over 10 scenes of <= %zu gaussians, 64x64, 4096 steps; %.1f s (limit 120 s)",
                worst, max_count, t)};
}

// ----------------------------------------------------------- 2. gradients

Outcome gradient_check() {
    const auto start = Clock::now();
    Rng rng(2002);
    RenderConfig cfg;
    cfg.cutoff = 10.0;
    cfg.background = Vec3(0.3, 0.1, 0.2);
    GradientCheck worst;
    for (int scene = 0; scene < 12; ++scene) {
        const GaussianMixture mix = separated_scene(rng, 5, 0.5, 0.08, 0.25, 0.3, 3.0, scene % 3, 1.5);
        const Camera cam = random_view(rng, square_intrinsics(32, 32.0), 2.5);
        const GradientCheck r = check_gradients(mix, cam, cfg, random_image(rng, 32, 32, 3));
        worst.opacity = std::max(worst.opacity, r.opacity);
        worst.mean = std::max(worst.mean, r.mean);
        worst.scale = std::max(worst.scale, r.scale);
        worst.orientation = std::max(worst.orientation, r.orientation);
        worst.sh = std::max(worst.sh, r.sh);
    }
    const double t = seconds_since(start);
    return {worst.worst() <= 1e-3 && t <= 300.0,
            fmt("worst relative error opacity %.2g mean %.2g scale %.2g rotation %.2g sh %.2g (tol 1e-3) over 12 "
                "scenes; %.1f s (limit 300 s)",
                worst.opacity, worst.mean, worst.scale, worst.orientation, worst.sh, t)};
}

// ------------------------------------------------------------ 3. epipolar

/// Independent exhaustive selection with the documented rules.
CellMatch oracle_match(const FeatureGrid& ft, int r, int c, const FeatureGrid& fk, const Mat3& F, double band) {
    const double* q = ft.cell(r, c);
    const double qn = feature_norm(q, ft.dim());
    const auto line = epipolar_line(F, ft.cell_center(r, c));
    bool found = false;
    double bd = 0.0, bl = 0.0;
    std::size_t bi = 0;
    for (std::size_t j = 0; j < fk.cell_count(); ++j) {
        const int kr = static_cast<int>(j / fk.cols()), kc = static_cast<int>(j % fk.cols());
        const double ld = line ? point_line_distance(*line, fk.cell_center(kr, kc)) : 0.0;
        if (line && ld > band) continue;
        if (!(qn > 0.0) || !(feature_norm(fk.cell(j), fk.dim()) > 0.0)) continue;
        const double d = cosine_distance(q, fk.cell(j), fk.dim());
        if (!found || d < bd || (d == bd && (ld < bl || (ld == bl && j < bi)))) {
            found = true;
            bd = d;
            bl = ld;
            bi = j;
        }
    }
    if (!line) {
        if (!found) return {r, c, 0.0, MatchFlag::epipole};
        return {static_cast<int>(bi / fk.cols()), static_cast<int>(bi % fk.cols()), bd, MatchFlag::epipole};
    }
    if (found) return {static_cast<int>(bi / fk.cols()), static_cast<int>(bi % fk.cols()), bd, MatchFlag::none};
    // fallback: the cell nearest the line, lowest index on ties
    double nd = std::numeric_limits<double>::infinity();
    std::size_t ni = 0;
    for (std::size_t j = 0; j < fk.cell_count(); ++j) {
        const double ld = point_line_distance(*line, fk.cell_center(static_cast<int>(j / fk.cols()),
                                                                    static_cast<int>(j % fk.cols())));
        if (ld < nd) {
            nd = ld;
            ni = j;
        }
    }
    return {static_cast<int>(ni / fk.cols()), static_cast<int>(ni % fk.cols()), nd, MatchFlag::fallback};
}

Outcome epipolar_exactness() {
    // (a) synthesized correspondences
    Rng rng(3003);
    const Intrinsics k{100.0, 100.0, 50.0, 50.0, 100, 100};
    double worst_residual = 0.0;
    for (int pair = 0; pair < 20; ++pair) {
        const Camera a = random_view(rng, k, uniform(rng, 2.0, 5.0));
        const Camera b = random_view(rng, k, uniform(rng, 2.0, 5.0));
        const Mat3 F = fundamental_matrix(a, b);
        const Mat3 Fn = F / F.norm();
        int tested = 0;
        while (tested < 1000) {
            const Vec3 X(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
            const auto u = project(a, X);
            const auto v = project(b, X);
            if (!u || !v) continue;
            ++tested;
            const Vec3 uh = Vec3(u->x(), u->y(), 1.0).normalized();
            const Vec3 vh = Vec3(v->x(), v->y(), 1.0).normalized();
            worst_residual = std::max(worst_residual, std::fabs(vh.dot(Fn * uh)));
        }
    }
    // (b) selection on full scenes against the exhaustive oracle
    std::size_t compared = 0, mismatched = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        SceneSpec s;
        s.seed = 100 + seed;
        const Scene sc = generate_scene(s);
        const ViewSequence seq = render_sequence(sc.mixture, sc.cameras, {});
        std::vector<FeatureGrid> feats;
        for (const auto& img : seq.images) feats.push_back(extract_patch_features(img, 8));
        const auto keys = select_key_views(seq.size(), 5, seed);
        const double band = 1.5 * 8;
        for (std::size_t t = 0; t < seq.size(); ++t) {
            if (std::find(keys.begin(), keys.end(), t) != keys.end()) continue;  // keys are not matched
            const auto [k1, k2] = nearest_key_views(t, keys, seq.cameras);
            for (std::size_t kk : {k1, k2}) {
                if (kk == t) continue;
                const Mat3 F = fundamental_matrix(seq.cameras[t], seq.cameras[kk]);
                const MatchResult res = match_epipolar(feats[t], feats[kk], F, band);
                for (int r = 0; r < feats[t].rows(); ++r) {
                    for (int c = 0; c < feats[t].cols(); ++c) {
                        const CellMatch& m = res.cells[static_cast<std::size_t>(r) * feats[t].cols() + c];
                        ++compared;
                        if (!(m == oracle_match(feats[t], r, c, feats[kk], F, band))) ++mismatched;
                    }
                }
            }
        }
    }
    return {worst_residual <= 1e-6 && mismatched == 0 && compared > 0,
            fmt("max |v^T F u| %.2g (tol 1e-6, unit homogeneous points, |F| = 1) over 20 pairs x 1000 points; "
                "%zu/%zu selections differ from the exhaustive oracle on 5 scenes",
                worst_residual, mismatched, compared)};
}

// ---------------------------------------------------------- 4. consistency

struct SequenceGeometry {
    ViewSequence seq;
    std::vector<Image> depths, coverage;  // sequence order
};

SequenceGeometry sequence_geometry(const Scene& sc) {
    SequenceGeometry g;
    const DepthSet geo = render_depth_set(sc.mixture, sc.cameras, {});
    g.seq = render_sequence(sc.mixture, sc.cameras, {});
    for (std::size_t id : g.seq.ids) {
        g.depths.push_back(geo.depths[id]);
        g.coverage.push_back(geo.coverage[id]);
    }
    return g;
}

Outcome consistency_gap() {
    const auto start = Clock::now();
    std::string detail;
    bool pass = true;
    for (std::uint64_t seed : {0u, 1u, 2u}) {
        SceneSpec s;
        s.seed = seed;
        const Scene sc = generate_scene(s);
        const SequenceGeometry g = sequence_geometry(sc);
        EditSpec spec;
        spec.kind = EditKind::per_view_random;
        spec.seed = seed;
        spec.normalize();
        const MockEditor editor;
        EditOptions opts;
        opts.seed = seed;
        const double joint = reprojection_consistency(edit_sequence(g.seq, spec, editor, opts).images, g.depths,
                                                      g.coverage, g.seq.cameras)
                                 .error;
        const double indep = reprojection_consistency(edit_independently(g.seq, spec, editor).images, g.depths,
                                                      g.coverage, g.seq.cameras)
                                 .error;
        pass = pass && joint <= indep / 3.0;
        detail += fmt("seed %d T=%zu: %.4f vs %.4f (ratio %.2f); ", static_cast<int>(seed), g.seq.size(), joint, indep,
                      joint / indep);
    }
    const double t = seconds_since(start);
    return {pass && t <= 180.0,
            "edit_sequence vs independent per-view-random error, need ratio <= 0.333: " + detail +
                fmt("%.1f s (limit 180 s)", t)};
}

// ------------------------------------------------------------- 5. ablation

Outcome epipolar_ablation() {
    const fs::path dir = fresh_dir("dge_acceptance_ablation");
    const fs::path fixtures = DGE_FIXTURE_DIR;
    const std::string d = dir.string();
    if (run_cli("gen --spec " + (fixtures / "uniform_scene.json").string() + " --out " + d + "/s.ply --cams " + d +
                "/c.json") != 0) {
        return {false, "dge gen failed on the fixture"};
    }
    const std::string common = "edit --scene " + d + "/s.ply --cams " + d + "/c.json --spec " +
                               (fixtures / "uniform_edit.json").string() + " --no-attention --out ";
    if (run_cli(common + d + "/epi") != 0 || run_cli(common + d + "/none --no-epipolar") != 0) {
        return {false, "dge edit failed on the fixture"};
    }
    const double epi = io::read_json(dir / "epi" / "report.json").at("consistency_error").get<double>();
    const double none = io::read_json(dir / "none" / "report.json").at("consistency_error").get<double>();
    bool pass = none > epi;
    std::string detail = fmt("fixture: unconstrained %.5f > epipolar %.5f (strict); ", none, epi);

    // the non-strict property on further uniform scenes
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        for (SceneLayout layout : {SceneLayout::orbit_sphere, SceneLayout::box_grid}) {
            SceneSpec s;
            s.seed = seed;
            s.layout = layout;
            s.uniform = true;
            const Scene sc = generate_scene(s);
            const SequenceGeometry g = sequence_geometry(sc);
            const EditSpec spec = EditSpec::from_json(io::read_json(fixtures / "uniform_edit.json"));
            const MockEditor editor(MockEditorConfig{.stride = 8, .stages = 4, .sharpness = 256.0, .attention = false});
            EditOptions on, off;
            off.match.epipolar = false;
            const double a =
                reprojection_consistency(edit_sequence(g.seq, spec, editor, on).images, g.depths, g.coverage,
                                         g.seq.cameras)
                    .error;
            const double b =
                reprojection_consistency(edit_sequence(g.seq, spec, editor, off).images, g.depths, g.coverage,
                                         g.seq.cameras)
                    .error;
            pass = pass && b >= a;
            detail += fmt("%s/%d %.4f>=%.4f; ", to_string(layout).c_str(), static_cast<int>(seed), b, a);
        }
    }
    fs::remove_all(dir);
    return {pass, detail};
}

// ---------------------------------------------------------- 6. convergence

std::optional<int> first_at(const FitReport& r, double level) {
    for (const auto& e : r.evaluations) {
        if (e.psnr >= level) return e.iteration;
    }
    return std::nullopt;
}

Outcome direct_fit_convergence() {
    const auto start = Clock::now();
    SceneSpec s;
    s.seed = 0;
    const Scene sc = generate_scene(s);
    EditSpec spec;
    spec.kind = EditKind::per_view_random;
    spec.normalize();
    const GaussianMixture truth = apply_edit_3d(sc.mixture, spec);
    const std::vector<Image> reference = render_all(truth, sc.cameras);

    FitConfig cfg;
    cfg.iterations = 1500;
    cfg.eval_every = 10;
    cfg.target_psnr = 30.0;
    const ViewSequence targets = render_sequence(truth, sc.cameras, cfg.render);
    const auto [fitted, direct] = fit(sc.mixture, targets, cfg);
    const auto direct30 = direct.iterations_to_target;
    const auto direct25 = first_at(direct, 25.0);

    // IDU with the same optimizer, seed and budget; the editor works per
    // pixel so its only handicap is the independent per-view edits.
    const MockEditor editor(MockEditorConfig{.stride = 1, .stages = 1, .sharpness = 256.0, .attention = false});
    const auto [idu_mix, idu] = idu_baseline(sc.mixture, editor, spec, sc.cameras, cfg, &reference);
    const auto idu25 = first_at(idu, 25.0);
    double idu_best = 0.0;
    for (const auto& e : idu.evaluations) idu_best = std::max(idu_best, e.psnr);
    const double t = seconds_since(start);

    bool pass = direct30 && *direct30 <= 1500 && direct25;
    std::string idu_text;
    if (pass) {
        if (idu25) {
            pass = *idu25 >= 2 * *direct25;
            idu_text = fmt("idu reaches 25 dB at %d (need >= %d)", *idu25, 2 * *direct25);
        } else {
            // not reached within a budget that already exceeds twice direct's count
            pass = cfg.iterations >= 2 * *direct25;
            idu_text = fmt("idu never reaches 25 dB in %d iterations (best %.2f dB; need >= %d)", cfg.iterations,
                           idu_best, 2 * *direct25);
        }
    }
    pass = pass && t <= 600.0;
    return {pass, fmt("T=%zu: direct reaches 30 dB at %d (limit 1500) and 25 dB at %d; %s; %.1f s (limit 600 s)",
                      sc.cameras.size(), direct30 ? *direct30 : -1, direct25 ? *direct25 : -1, idu_text.c_str(), t)};
}

// ------------------------------------------------------------- 7. locality

Outcome partial_edit_locality() {
    double worst = std::numeric_limits<double>::infinity();
    bool identical = true;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        Rng rng(7000 + seed);
        GaussianMixture mix(0);
        for (int side = 0; side < 2; ++side) {
            int placed = 0;
            while (placed < 6) {
                const Vec3 mean((side == 0 ? -1.0 : 1.0) * uniform(rng, 0.25, 0.9), uniform(rng, -0.6, 0.6),
                                uniform(rng, -0.6, 0.6));
                bool ok = true;
                for (const auto& p : mix.primitives()) ok = ok && (p.mean - mean).norm() >= 0.3;
                if (!ok) continue;
                mix.add(make_gaussian(uniform(rng, 8.0, 15.0), mean, Vec3::Constant(uniform(rng, 0.05, 0.08)),
                                      random_quaternion(rng),
                                      Vec3(uniform(rng, 0.2, 0.8), uniform(rng, 0.2, 0.8), uniform(rng, 0.2, 0.8))));
                ++placed;
            }
        }
        std::vector<Camera> cams;
        const Intrinsics k = square_intrinsics(48, 72.0);
        for (int i = 0; i < 6; ++i) {
            const double a = -0.5 + i / 5.0;
            cams.push_back(Camera::look_at(k, Vec3(4.0 * std::sin(a), 0.8, -4.0 * std::cos(a)), Vec3::Zero()));
        }
        // recolor the left half of the scene and select it
        std::vector<bool> left(mix.size());
        GaussianMixture edited = mix;
        for (std::size_t i = 0; i < mix.size(); ++i) {
            left[i] = mix[i].mean.x() < 0.0;
            if (left[i]) {
                edited[i] = make_gaussian(mix[i].opacity, mix[i].mean, mix[i].scale, mix[i].orientation,
                                          Vec3(0.9, 0.2, 0.1));
            }
        }
        FitConfig cfg;
        cfg.iterations = 400;
        cfg.lr.sh = 0.01;
        cfg.mask = GaussianMask{left};
        const auto [out, report] = partial_fit(mix, render_sequence(edited, cams, cfg.render), cfg);
        for (std::size_t i = 0; i < mix.size(); ++i) {
            if (!left[i]) identical = identical && out[i] == mix[i];
        }
        for (const auto& cam : cams) {
            const Image cover = render_mask(mix, cam, cfg.render, left);
            const Image before = splat_render(mix, cam, cfg.render);
            const Image after = splat_render(out, cam, cfg.render);
            double se = 0.0;
            std::size_t n = 0;
            for (int y = 0; y < before.height(); ++y) {
                for (int x = 0; x < before.width(); ++x) {
                    if (cover.at(x, y) > 1e-3) continue;  // the selection's footprint
                    for (int c = 0; c < 3; ++c) {
                        const double diff = after.at(x, y, c) - before.at(x, y, c);
                        se += diff * diff;
                        ++n;
                    }
                }
            }
            worst = std::min(worst, se > 0.0 ? -10.0 * std::log10(se / static_cast<double>(n)) : 100.0);
        }
    }
    return {identical && worst >= 45.0,
            fmt("unselected gaussians bit-identical: %s; worst unmasked-region PSNR vs pre-edit %.1f dB (need >= 45) "
                "over 3 scenes x 6 views",
                identical ? "yes" : "no", worst)};
}

// ---------------------------------------------------------- 8. determinism

Outcome compare_determinism() {
    const fs::path dir = fresh_dir("dge_acceptance_compare");
    const std::string d = dir.string();
    {
        std::ofstream(dir / "edit.json") << R"({"kind": "per-view-random"})";
        std::ofstream(dir / "fit.json") << R"({"iterations": 300})";
    }
    if (run_cli("gen --out " + d + "/s.ply --cams " + d + "/c.json --seed 11") != 0) return {false, "dge gen failed"};
    const std::string args = "compare --scene " + d + "/s.ply --cams " + d + "/c.json --spec " + d +
                             "/edit.json --config " + d + "/fit.json --seed 42 --out ";
    if (run_cli(args + d + "/a") != 0 || run_cli(args + d + "/b") != 0) return {false, "dge compare failed"};
    bool same = true;
    for (const char* m : {"direct", "independent", "idu"}) {
        const std::string a = slurp(dir / "a" / m / "summary.json");
        same = same && !a.empty() && a == slurp(dir / "b" / m / "summary.json");
    }
    fs::remove_all(dir);
    return {same, same ? "summary.json bit-identical across two compare runs (3 methods, --seed 42)"
                       : "summary.json differs between runs"};
}

// ------------------------------------------------------------ 9. invariants

Outcome invariant_suite() {
    std::size_t violations = 0, checks = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(9000 + seed);
        // attention rows are stochastic and outputs stay in the value hull
        {
            const int views = 1 + static_cast<int>(seed % 4);
            std::vector<FeatureGrid> qs, ks, vs;
            for (int v = 0; v < views; ++v) {
                for (auto* list : {&qs, &ks, &vs}) {
                    FeatureGrid g(2, 3, 5, 8);
                    const double spread = list == &vs ? 1.0 : (seed % 3 == 0 ? 30.0 : 2.0);
                    for (double& x : g.values()) x = uniform(rng, -spread, spread);
                    list->push_back(std::move(g));
                }
            }
            const std::size_t t = seed % views;
            const auto w = st_attention_weights(qs, ks, t);
            const std::size_t total = 6u * views;
            for (std::size_t i = 0; i < 6; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < total; ++j) {
                    if (w[i * total + j] < 0.0) ++violations;
                    s += w[i * total + j];
                }
                ++checks;
                if (std::fabs(s - 1.0) > 1e-6) ++violations;
            }
            const FeatureGrid out = st_attention(qs, ks, vs, t);
            for (int d = 0; d < 5; ++d) {
                double lo = std::numeric_limits<double>::infinity(), hi = -lo;
                for (const auto& v : vs) {
                    for (std::size_t c = 0; c < v.cell_count(); ++c) {
                        lo = std::min(lo, v.cell(c)[d]);
                        hi = std::max(hi, v.cell(c)[d]);
                    }
                }
                for (std::size_t i = 0; i < out.cell_count(); ++i) {
                    ++checks;
                    if (out.cell(i)[d] < lo - 1e-12 || out.cell(i)[d] > hi + 1e-12) ++violations;
                }
            }
        }
        // compositing weights plus residual transmittance sum to one
        const GaussianMixture mix = separated_scene(rng, 6, 0.6, 0.05, 0.3, 0.1, 20.0, static_cast<int>(seed % 3), 2.0);
        const Camera cam = random_view(rng, square_intrinsics(12, 12.0), 2.5);
        for (int y = 0; y < 12; y += 3) {
            for (int x = 0; x < 12; x += 3) {
                const PixelTrace tr = trace_pixel(mix, cam, {}, x, y);
                double s = tr.residual;
                for (const auto& c : tr.contributions) {
                    if (c.weight < 0.0) ++violations;
                    s += c.weight;
                }
                ++checks;
                if (std::fabs(s - 1.0) > 1e-12) ++violations;
            }
        }
        // fixed point and type invariants after every optimizer step
        std::vector<Camera> cams;
        for (int i = 0; i < 3; ++i) cams.push_back(random_view(rng, square_intrinsics(16, 24.0), 3.0));
        {
            FitConfig cfg;
            cfg.iterations = 50;
            cfg.seed = seed;
            const auto [out, report] = fit(mix, render_sequence(mix, cams, {}), cfg);
            for (std::size_t i = 0; i < mix.size(); ++i) {
                ++checks;
                double d = std::fabs(out[i].opacity - mix[i].opacity);
                d = std::max({d, (out[i].mean - mix[i].mean).cwiseAbs().maxCoeff(),
                              (out[i].scale - mix[i].scale).cwiseAbs().maxCoeff(),
                              (out[i].orientation - mix[i].orientation).cwiseAbs().maxCoeff()});
                for (std::size_t k = 0; k < mix[i].sh.size(); ++k) d = std::max(d, std::fabs(out[i].sh[k] - mix[i].sh[k]));
                if (d > 1e-6) ++violations;
            }
        }
        {
            GaussianMixture other = mix;
            for (auto& p : other.primitives()) {
                p.opacity *= uniform(rng, 0.2, 2.0);
                p.scale *= uniform(rng, 0.5, 1.5);
                for (double& s : p.sh) s += uniform(rng, -0.4, 0.4);
            }
            FitConfig cfg;
            cfg.iterations = 20;
            cfg.seed = seed;
            cfg.lr.opacity = 2.0;
            cfg.lr.scale = 0.1;
            cfg.lr.rotation = 0.2;
            cfg.observer = [&](int, const GaussianMixture& m) {
                for (const auto& p : m.primitives()) {
                    ++checks;
                    bool ok = p.opacity >= 0.0 && std::isfinite(p.opacity) && p.mean.allFinite();
                    ok = ok && (p.scale.array() >= cfg.scale_floor).all();
                    ok = ok && std::fabs(p.orientation.norm() - 1.0) <= 1e-12;
                    for (double s : p.sh) ok = ok && std::isfinite(s);
                    if (!ok) ++violations;
                }
            };
            try {
                fit(mix, render_sequence(other, cams, {}), cfg);
            } catch (const RuntimeFailure&) {
                // divergence is reported, not an invariant violation
            }
        }
    }
    return {violations == 0 && checks > 0,
            fmt("%zu violations in %zu checks over 100 seeds (attention rows and hull, compositing unity, fixed-point "
                "fitting, type invariants after every step)",
                violations, checks)};
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {"renderer oracle equivalence", renderer_oracle},
        {"gradient correctness", gradient_check},
        {"epipolar exactness", epipolar_exactness},
        {"consistency gap", consistency_gap},
        {"epipolar ablation", epipolar_ablation},
        {"direct-fit convergence", direct_fit_convergence},
        {"partial-edit locality", partial_edit_locality},
        {"determinism", compare_determinism},
        {"invariant suite", invariant_suite},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::printf("%s %zu. %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
    return failed;
}
