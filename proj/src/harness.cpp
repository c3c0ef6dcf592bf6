// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#include "dge/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <set>

#include <Eigen/Geometry>

#include "dge/io.hpp"
#include "dge/renderer.hpp"

namespace dge {

using nlohmann::json;

// ------------------------------------------------------------------ scene

std::string to_string(SceneLayout layout) {
    switch (layout) {
        case SceneLayout::orbit_sphere: return "orbit-sphere";
        case SceneLayout::box_grid: return "box-grid";
        case SceneLayout::two_cluster: return "two-cluster";
        case SceneLayout::from_ply: return "from-ply";
    }
    return "?";
}

SceneLayout scene_layout_from_string(const std::string& name) {
    for (SceneLayout l : {SceneLayout::orbit_sphere, SceneLayout::box_grid, SceneLayout::two_cluster, SceneLayout::from_ply}) {
        if (to_string(l) == name) return l;
    }
    throw ValidationError("scene: unknown layout '" + name + "'");
}

void SceneSpec::validate() const {
    if (layout != SceneLayout::from_ply && gaussian_count < 1) throw ValidationError("scene: gaussian_count must be >= 1");
    if (camera_count != 0 && camera_count < 2) throw ValidationError("scene: camera_count must be >= 2 (or 0 for 20-30)");
    if (!(radius > kExtent) || !std::isfinite(radius)) throw ValidationError("scene: radius must exceed the scene extent");
    if (!std::isfinite(elevation) || std::fabs(elevation) >= 85.0) throw ValidationError("scene: elevation must be within (-85, 85) degrees");
    if (!(arc > 0.0 && arc <= 360.0)) throw ValidationError("scene: arc must be in (0, 360] degrees");
    if (image_size < 8) throw ValidationError("scene: image_size must be >= 8");
    if (!(focal >= 0.0) || !std::isfinite(focal)) throw ValidationError("scene: focal must be >= 0");
    if (sh_degree < 0 || sh_degree > 2) throw ValidationError("scene: sh_degree must be 0, 1 or 2");
    if (layout == SceneLayout::from_ply && ply_path.empty()) throw ValidationError("scene: from-ply needs ply_path");
}

json SceneSpec::to_json() const {
    return {{"layout", to_string(layout)}, {"gaussian_count", gaussian_count}, {"camera_count", camera_count},
            {"radius", radius},          {"elevation", elevation},           {"arc", arc},
            {"image_size", image_size},  {"focal", focal},                   {"sh_degree", sh_degree},
            {"seed", seed},              {"ply_path", ply_path},             {"uniform", uniform}};
}

SceneSpec SceneSpec::from_json(const json& j) {
    static const std::set<std::string> known = {"layout", "gaussian_count", "camera_count", "radius",
                                                "elevation", "arc", "image_size", "focal",
                                                "sh_degree", "seed", "ply_path", "uniform"};
    if (!j.is_object()) throw ValidationError("scene: expected a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) throw ValidationError("scene: unknown field '" + key + "'");
    }
    SceneSpec s;
    try {
        if (j.contains("layout")) s.layout = scene_layout_from_string(j.at("layout").get<std::string>());
        if (j.contains("gaussian_count")) s.gaussian_count = j.at("gaussian_count").get<int>();
        if (j.contains("camera_count")) s.camera_count = j.at("camera_count").get<int>();
        if (j.contains("radius")) s.radius = j.at("radius").get<double>();
        if (j.contains("elevation")) s.elevation = j.at("elevation").get<double>();
        if (j.contains("arc")) s.arc = j.at("arc").get<double>();
        if (j.contains("image_size")) s.image_size = j.at("image_size").get<int>();
        if (j.contains("focal")) s.focal = j.at("focal").get<double>();
        if (j.contains("sh_degree")) s.sh_degree = j.at("sh_degree").get<int>();
        if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("ply_path")) s.ply_path = j.at("ply_path").get<std::string>();
        if (j.contains("uniform")) s.uniform = j.at("uniform").get<bool>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("scene: ") + e.what());
    }
    s.validate();
    return s;
}

namespace {

using Rng = std::mt19937_64;

double uni(Rng& rng, double lo, double hi) { return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53); }

Vec4 random_rotation(Rng& rng) {
    // uniform unit quaternion (Shoemake)
    const double u1 = uni(rng, 0, 1), u2 = uni(rng, 0, 2 * std::numbers::pi), u3 = uni(rng, 0, 2 * std::numbers::pi);
    const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
    return Vec4(a * std::sin(u2), a * std::cos(u2), b * std::sin(u3), b * std::cos(u3));
}

/// Smooth seeded color field so neighboring Gaussians look alike.
struct Texture {
    Vec3 freq[3];
    double phase[3];
    explicit Texture(Rng& rng) {
        for (int c = 0; c < 3; ++c) {
            freq[c] = Vec3(uni(rng, -1.0, 1.0), uni(rng, -1.0, 1.0), uni(rng, -1.0, 1.0));
            phase[c] = uni(rng, 0, 2 * std::numbers::pi);
        }
    }
    Vec3 operator()(const Vec3& p, Rng& rng) const {
        Vec3 c;
        for (int k = 0; k < 3; ++k) c[k] = 0.5 + 0.35 * std::sin(freq[k].dot(p) + phase[k]) + uni(rng, -0.01, 0.01);
        return c.cwiseMax(0.02).cwiseMin(0.98);
    }
};

void add_gaussian(GaussianMixture& mix, Rng& rng, const Texture& tex, const Vec3& mean, double smin, double smax,
                  int sh_degree) {
    const Vec3 scale(uni(rng, smin, smax), uni(rng, smin, smax), uni(rng, smin, smax));
    GaussianPrimitive g = make_gaussian(uni(rng, 3.0, 8.0), mean, scale, random_rotation(rng), tex(mean, rng), sh_degree);
    for (std::size_t k = 3; k < g.sh.size(); ++k) g.sh[k] = uni(rng, -0.1, 0.1);
    mix.add(std::move(g));
}

Vec3 in_ball(Rng& rng, double r) {
    while (true) {
        const Vec3 p(uni(rng, -1, 1), uni(rng, -1, 1), uni(rng, -1, 1));
        if (p.squaredNorm() <= 1.0) return r * p;
    }
}

}  // namespace

Scene generate_scene(const SceneSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    Scene scene;
    const Texture tex(rng);
    const int n = spec.gaussian_count;
    switch (spec.layout) {
        case SceneLayout::orbit_sphere: {
            // tangent discs on a golden-angle spiral over the unit sphere
            scene.mixture = GaussianMixture(spec.sh_degree);
            const double s = std::clamp(2.2 / std::sqrt(static_cast<double>(n)), 0.03, 0.5);
            const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
            for (int i = 0; i < n; ++i) {
                const double y = n > 1 ? 1.0 - 2.0 * (i + 0.5) / n : 0.0;
                const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
                const Vec3 normal(r * std::cos(golden * i), y, r * std::sin(golden * i));
                const Eigen::Quaterniond q = Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), normal);
                const Vec3 mean = n > 1 ? normal : Vec3::Zero();
                const Vec3 scale(uni(rng, 0.8, 1.1) * s, uni(rng, 0.8, 1.1) * s, 0.15 * s);
                GaussianPrimitive g = make_gaussian(uni(rng, 10.0, 20.0), mean, scale, Vec4(q.w(), q.x(), q.y(), q.z()),
                                                    tex(mean, rng), spec.sh_degree);
                for (std::size_t k = 3; k < g.sh.size(); ++k) g.sh[k] = uni(rng, -0.1, 0.1);
                scene.mixture.add(std::move(g));
            }
            break;
        }
        case SceneLayout::box_grid: {
            scene.mixture = GaussianMixture(spec.sh_degree);
            const int side = std::max(1, static_cast<int>(std::ceil(std::cbrt(static_cast<double>(n)))));
            // the grid corners sit exactly at the scene extent
            const double half = SceneSpec::kExtent / std::sqrt(3.0);
            const double spacing = side > 1 ? 2.0 * half / (side - 1) : 0.0;
            const double s = side > 1 ? 0.35 * spacing : 0.2;
            for (int i = 0; i < n; ++i) {
                const int x = i % side, y = (i / side) % side, z = i / (side * side);
                const Vec3 p = side > 1 ? Vec3(-half + x * spacing, -half + y * spacing, -half + z * spacing) : Vec3::Zero();
                add_gaussian(scene.mixture, rng, tex, p, 0.8 * s, 1.2 * s, spec.sh_degree);
            }
            break;
        }
        case SceneLayout::two_cluster: {
            scene.mixture = GaussianMixture(spec.sh_degree);
            const double s = std::clamp(0.5 / std::cbrt(static_cast<double>(n)), 0.03, 0.2);
            for (int i = 0; i < n; ++i) {
                const Vec3 center((i % 2 == 0 ? -1.0 : 1.0) * SceneSpec::kClusterOffset, 0.0, 0.0);
                const Vec3 p = i < 2 ? center : Vec3(center + in_ball(rng, 0.45));
                add_gaussian(scene.mixture, rng, tex, p, 0.6 * s, 1.2 * s, spec.sh_degree);
            }
            break;
        }
        case SceneLayout::from_ply:
            scene.mixture = io::read_ply(spec.ply_path);
            break;
    }

    const int t = spec.camera_count > 0 ? spec.camera_count : 20 + static_cast<int>(rng() % 11);
    const double f = spec.focal > 0.0 ? spec.focal : 1.5 * spec.image_size;
    const Intrinsics k{f, f, spec.image_size / 2.0, spec.image_size / 2.0, spec.image_size, spec.image_size};
    const double deg = std::numbers::pi / 180.0;
    const double start = uni(rng, 0, 2 * std::numbers::pi);
    const double step = spec.arc >= 360.0 ? spec.arc * deg / t : spec.arc * deg / (t - 1);
    for (int i = 0; i < t; ++i) {
        const double az = start + i * step;
        const double el = (spec.elevation + uni(rng, -5.0, 5.0)) * deg;
        const Vec3 eye = spec.radius * Vec3(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
        scene.cameras.push_back(Camera::look_at(k, eye, Vec3::Zero()));
    }
    std::shuffle(scene.cameras.begin(), scene.cameras.end(), rng);
    if (spec.uniform) {
        for (auto& p : scene.mixture.primitives()) {
            std::fill(p.sh.begin(), p.sh.end(), 0.0);
            for (int c = 0; c < 3; ++c) p.sh[static_cast<std::size_t>(c)] = sh_dc_from_color(SceneSpec::kUniformGray);
        }
    }
    return scene;
}

// ------------------------------------------------------------ consistency

DepthSet render_depth_set(const GaussianMixture& mix, std::span<const Camera> cameras, const RenderConfig& cfg) {
    DepthSet out;
    const std::vector<bool> all(mix.size(), true);
    for (const auto& cam : cameras) {
        out.depths.push_back(render_depth(mix, cam, cfg));
        out.coverage.push_back(render_mask(mix, cam, cfg, all));
    }
    return out;
}

ConsistencyResult reprojection_consistency(std::span<const Image> images, std::span<const Image> depths,
                                           std::span<const Image> coverage, std::span<const Camera> cameras,
                                           const ConsistencyOptions& opts) {
    const std::size_t n = cameras.size();
    if (images.size() != n || depths.size() != n || coverage.size() != n) {
        throw ValidationError("consistency: one image, depth and coverage per camera required");
    }
    if (opts.sample_stride < 1 || opts.neighbors < 1 || !(opts.depth_tolerance > 0.0)) {
        throw ValidationError("consistency: invalid options");
    }
    for (std::size_t v = 0; v < n; ++v) {
        const Intrinsics& k = cameras[v].intrinsics();
        for (const Image* im : {&images[v], &depths[v], &coverage[v]}) {
            if (im->width() != k.width || im->height() != k.height) {
                throw ValidationError("consistency: view " + std::to_string(v) + " does not match its camera");
            }
        }
        if (images[v].channels() != 3) throw ValidationError("consistency: images must be RGB");
    }
    double total = 0.0;
    std::size_t count = 0;
    std::vector<std::pair<double, std::size_t>> near;
    for (std::size_t t = 0; t < n; ++t) {
        near.clear();
        for (std::size_t o = 0; o < n; ++o) {
            if (o != t) near.emplace_back(forward_angle(cameras[t], cameras[o]), o);
        }
        std::sort(near.begin(), near.end());
        near.resize(std::min<std::size_t>(near.size(), static_cast<std::size_t>(opts.neighbors)));
        const Camera& cam = cameras[t];
        for (int y = 0; y < cam.intrinsics().height; y += opts.sample_stride) {
            for (int x = 0; x < cam.intrinsics().width; x += opts.sample_stride) {
                if (coverage[t].at(x, y) < opts.min_coverage) continue;
                const Vec3 world = cam.unproject(x + 0.5, y + 0.5, depths[t].at(x, y));
                for (const auto& [angle, o] : near) {
                    const Camera& other = cameras[o];
                    const auto uv = project(other, world);
                    if (!uv) continue;
                    const int w = other.intrinsics().width, h = other.intrinsics().height;
                    if (uv->x() < 0.5 || uv->y() < 0.5 || uv->x() > w - 0.5 || uv->y() > h - 0.5) continue;
                    const int px = std::min(w - 1, static_cast<int>(uv->x()));
                    const int py = std::min(h - 1, static_cast<int>(uv->y()));
                    if (coverage[o].at(px, py) < opts.min_coverage) continue;
                    const double z = (other.rotation() * world + other.translation()).z();
                    if (std::fabs(depths[o].at(px, py) - z) > opts.depth_tolerance * z) continue;
                    double diff = 0.0;
                    for (int c = 0; c < 3; ++c) diff += std::fabs(images[t].at(x, y, c) - images[o].sample(uv->x(), uv->y(), c));
                    total += diff / 3.0;
                    ++count;
                }
            }
        }
    }
    return {count > 0 ? total / static_cast<double>(count) : 0.0, count};
}

// ------------------------------------------------------------- experiment

std::string to_string(Method method) {
    switch (method) {
        case Method::direct: return "direct";
        case Method::independent: return "independent";
        case Method::idu: return "idu";
    }
    return "?";
}

Method method_from_string(const std::string& name) {
    for (Method m : {Method::direct, Method::independent, Method::idu}) {
        if (to_string(m) == name) return m;
    }
    throw ValidationError("unknown method '" + name + "'");
}

json ExperimentResult::summary() const {
    json j = {{"method", to_string(method)},
              {"consistency_error", consistency_error ? json(*consistency_error) : json(nullptr)},
              {"psnr", psnr},
              {"iterations_to_target", iterations_to_target ? json(*iterations_to_target) : json(nullptr)},
              {"duration_ms", nullptr},
              {"seed", seed}};
    if (!error.empty()) j["error"] = error;
    return j;
}

namespace {

template <typename T>
std::vector<T> to_camera_order(const std::vector<T>& in_seq, const ViewSequence& seq) {
    std::vector<T> out(in_seq.size());
    for (std::size_t t = 0; t < seq.size(); ++t) out[seq.ids[t]] = in_seq[t];
    return out;
}

void write_method_dir(const std::filesystem::path& dir, const ExperimentResult& r, const std::vector<Image>& edited,
                      const std::vector<Image>& renders) {
    std::filesystem::create_directories(dir);
    char name[32];
    for (std::size_t v = 0; v < edited.size(); ++v) {
        std::snprintf(name, sizeof name, "edited_%02zu.png", v);
        io::write_png(dir / name, edited[v]);
    }
    for (std::size_t v = 0; v < renders.size(); ++v) {
        std::snprintf(name, sizeof name, "render_%02zu.png", v);
        io::write_png(dir / name, renders[v]);
    }
    io::write_json(dir / "summary.json", r.summary());
}

}  // namespace

std::vector<ExperimentResult> run_experiment(const Scene& scene, const EditSpec& spec_in, const ExperimentConfig& cfg,
                                             const std::filesystem::path& out) {
    scene.mixture.validate();
    if (scene.cameras.size() < 2) throw ValidationError("experiment: need at least two cameras");
    if (cfg.methods.empty()) throw ValidationError("experiment: no methods");
    EditSpec spec = spec_in;
    spec.normalize();
    cfg.fit.validate();
    const MockEditor editor(cfg.editor);
    const RenderConfig& rc = cfg.fit.render;
    const auto& cams = scene.cameras;

    // Inputs shared by every method.
    const DepthSet geo = render_depth_set(scene.mixture, cams, rc);
    const ViewSequence seq = render_sequence(scene.mixture, cams, rc);
    const GaussianMixture truth = apply_edit_3d(scene.mixture, spec);
    std::vector<Image> reference;
    for (const auto& cam : cams) reference.push_back(splat_render(truth, cam, rc));
    std::vector<Image> ref_seq;
    for (std::size_t id : seq.ids) ref_seq.push_back(reference[id]);

    FitConfig fit_cfg = cfg.fit;
    fit_cfg.seed = cfg.seed;
    EditOptions edit_opts = cfg.edit;
    edit_opts.seed = cfg.seed;

    std::vector<ExperimentResult> results;
    json timing = json::object();
    for (Method method : cfg.methods) {
        ExperimentResult r;
        r.method = method;
        r.seed = cfg.seed;
        std::vector<Image> edited, renders;
        const auto start = std::chrono::steady_clock::now();
        try {
            GaussianMixture fitted;
            FitReport report;
            if (method == Method::idu) {
                std::vector<Image> pool;
                std::tie(fitted, report) = idu_baseline(scene.mixture, editor, spec, cams, fit_cfg, &reference, &pool);
                edited = std::move(pool);
            } else {
                const EditResult e = method == Method::direct ? edit_sequence(seq, spec, editor, edit_opts)
                                                              : edit_independently(seq, spec, editor);
                ViewSequence targets = seq;
                targets.images = e.images;
                std::tie(fitted, report) = fit(scene.mixture, targets, fit_cfg, &ref_seq);
                edited = to_camera_order(e.images, seq);
            }
            r.consistency_error = reprojection_consistency(edited, geo.depths, geo.coverage, cams, cfg.consistency).error;
            for (std::size_t v = 0; v < cams.size(); ++v) {
                renders.push_back(splat_render(fitted, cams[v], rc));
                r.psnr.push_back(psnr(renders.back(), reference[v]));
            }
            r.iterations_to_target = report.iterations_to_target;
        } catch (const std::exception& e) {
            r.error = e.what();
        }
        r.duration_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        timing[to_string(method)] = r.duration_ms;
        if (!out.empty()) write_method_dir(out / to_string(method), r, edited, renders);
        results.push_back(std::move(r));
    }
    if (!out.empty()) {
        std::filesystem::create_directories(out);
        io::write_json(out / "timing.json", timing);
    }
    return results;
}

}  // namespace dge
