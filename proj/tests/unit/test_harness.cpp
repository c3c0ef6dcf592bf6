// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "dge/editors.hpp"
#include "dge/error.hpp"
#include "dge/harness.hpp"
#include "dge/io.hpp"
#include "dge/renderer.hpp"
#include "test_util.hpp"

using namespace dge;
namespace fs = std::filesystem;

namespace {

std::vector<Image> render_all(const GaussianMixture& mix, std::span<const Camera> cams, const RenderConfig& cfg = {}) {
    std::vector<Image> out;
    for (const auto& c : cams) out.push_back(splat_render(mix, c, cfg));
    return out;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
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

std::size_t count_prefixed(const fs::path& dir, const std::string& prefix) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().filename().string().rfind(prefix, 0) == 0) ++n;
    }
    return n;
}

}  // namespace

TEST_CASE("scene spec validation and JSON") {
    SceneSpec s;
    CHECK_NOTHROW(s.validate());
    s.layout = SceneLayout::box_grid;
    s.gaussian_count = 17;
    s.camera_count = 5;
    s.seed = 12;
    s.uniform = true;
    CHECK(SceneSpec::from_json(s.to_json()).to_json() == s.to_json());
    CHECK(SceneSpec::from_json(s.to_json()).uniform);
    for (SceneLayout l : {SceneLayout::orbit_sphere, SceneLayout::box_grid, SceneLayout::two_cluster,
                          SceneLayout::from_ply}) {
        CHECK(scene_layout_from_string(to_string(l)) == l);
    }
    CHECK_THROWS_AS(scene_layout_from_string("torus"), ValidationError);

    auto invalid = [](auto mutate) {
        SceneSpec c;
        mutate(c);
        CHECK_THROWS_AS(c.validate(), ValidationError);
    };
    invalid([](SceneSpec& c) { c.gaussian_count = 0; });
    invalid([](SceneSpec& c) { c.camera_count = 1; });
    invalid([](SceneSpec& c) { c.radius = SceneSpec::kExtent; });
    invalid([](SceneSpec& c) { c.layout = SceneLayout::from_ply; });
    CHECK_THROWS_AS(SceneSpec::from_json({{"gaussians", 3}}), ValidationError);
    CHECK_THROWS_AS(SceneSpec::from_json({{"gaussian_count", "many"}}), ValidationError);
}

TEST_CASE("two-cluster with two gaussians puts them at the cluster centers") {
    SceneSpec s;
    s.layout = SceneLayout::two_cluster;
    s.gaussian_count = 2;
    const Scene sc = generate_scene(s);
    REQUIRE(sc.mixture.size() == 2);
    CHECK(sc.mixture[0].mean == Vec3(-SceneSpec::kClusterOffset, 0.0, 0.0));
    CHECK(sc.mixture[1].mean == Vec3(SceneSpec::kClusterOffset, 0.0, 0.0));
}

TEST_CASE("generate_scene is deterministic and seed dependent") {
    for (SceneLayout l : {SceneLayout::orbit_sphere, SceneLayout::box_grid, SceneLayout::two_cluster}) {
        SceneSpec s;
        s.layout = l;
        s.gaussian_count = 50;
        s.seed = 4;
        const Scene a = generate_scene(s), b = generate_scene(s);
        CHECK(a.mixture == b.mixture);
        REQUIRE(a.cameras.size() == b.cameras.size());
        for (std::size_t i = 0; i < a.cameras.size(); ++i) {
            CHECK(a.cameras[i].rotation() == b.cameras[i].rotation());
            CHECK(a.cameras[i].translation() == b.cameras[i].translation());
        }
        s.seed = 5;
        CHECK_FALSE(generate_scene(s).mixture == a.mixture);
    }
}

TEST_CASE("orbit cameras see the scene center and the default view count is 20 to 30") {
    std::set<std::size_t> counts;
    bool shuffled = false;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SceneSpec s;
        s.gaussian_count = 20;
        s.seed = seed;
        s.layout = static_cast<SceneLayout>(seed % 3);
        const Scene sc = generate_scene(s);
        counts.insert(sc.cameras.size());
        CHECK(sc.cameras.size() >= 20);
        CHECK(sc.cameras.size() <= 30);
        for (const auto& c : sc.cameras) {
            const auto uv = project(c, Vec3::Zero());
            REQUIRE(uv);
            CHECK(uv->x() >= 0.0);
            CHECK(uv->x() < c.width());
            CHECK(uv->y() >= 0.0);
            CHECK(uv->y() < c.height());
            CHECK((c.center().norm() - s.radius) == doctest::Approx(0.0).epsilon(1e-9).scale(1.0));
        }
        for (const auto& p : sc.mixture.primitives()) CHECK(p.mean.norm() <= SceneSpec::kExtent + 1e-12);
        const auto order = sort_cameras(sc.cameras);
        for (std::size_t i = 0; i < order.size(); ++i) shuffled = shuffled || order[i] != i;
    }
    CHECK(counts.size() > 3);
    CHECK(shuffled);
}

TEST_CASE("from-ply scenes load the mixture") {
    const fs::path dir = fresh_dir("dge_from_ply");
    SceneSpec s;
    s.gaussian_count = 30;
    s.seed = 2;
    const Scene orig = generate_scene(s);
    io::write_ply(dir / "scene.ply", orig.mixture);
    SceneSpec p;
    p.layout = SceneLayout::from_ply;
    p.ply_path = (dir / "scene.ply").string();
    p.camera_count = 6;
    const Scene loaded = generate_scene(p);
    CHECK(loaded.mixture == io::read_ply(dir / "scene.ply"));
    CHECK(loaded.cameras.size() == 6);
    p.ply_path = (dir / "missing.ply").string();
    CHECK_THROWS(generate_scene(p));
    fs::remove_all(dir);
}

TEST_CASE("reprojection consistency on a fronto-parallel plane") {
    // Cameras translated parallel to a plane at depth 4 with focal 32: a
    // 0.25 shift moves the plane by exactly 2 pixels.
    const int size = 40;
    const Intrinsics k = dge::testing::square_intrinsics(size, 32.0);
    std::vector<Camera> cams;
    for (int i = 0; i < 4; ++i) cams.emplace_back(k, Mat3::Identity(), Vec3(-0.25 * i, 0.0, 0.0));
    auto texture = [](double u, double v, int c) { return 0.5 + 0.4 * std::sin(0.7 * u + 0.3 * c) * std::cos(0.45 * v); };
    std::vector<Image> images, depths(4, Image(size, size, 1, 4.0)), coverage(4, Image(size, size, 1, 1.0));
    for (int i = 0; i < 4; ++i) {
        Image img(size, size, 3);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                for (int c = 0; c < 3; ++c) img.at(x, y, c) = texture(x + 2.0 * i, y, c);
            }
        }
        images.push_back(std::move(img));
    }
    const ConsistencyResult r = reprojection_consistency(images, depths, coverage, cams);
    CHECK(r.samples > 0);
    CHECK(r.error <= 1e-3);

    SUBCASE("identical uniform images") {
        std::vector<Image> flat(4, Image(size, size, 3, 0.3));
        CHECK(reprojection_consistency(flat, depths, coverage, cams).error <= 1e-3);
    }
    SUBCASE("a mismatched view raises the error") {
        std::vector<Image> off = images;
        for (double& v : off[2].values()) v = 1.0 - v;
        CHECK(reprojection_consistency(off, depths, coverage, cams).error > 0.05);
    }
    SUBCASE("low coverage and occluded samples are skipped") {
        std::vector<Image> none(4, Image(size, size, 1, 0.5));
        CHECK(reprojection_consistency(images, depths, none, cams).samples == 0);
        std::vector<Image> occluded = depths;
        for (int i = 1; i < 4; ++i) occluded[static_cast<std::size_t>(i)] = Image(size, size, 1, 3.0);
        std::vector<Image> scrambled = images;
        for (int i = 1; i < 4; ++i) {
            for (double& v : scrambled[static_cast<std::size_t>(i)].values()) v = 0.0;
        }
        // view 0's samples all fail the depth test; the rest agree with each other
        CHECK(reprojection_consistency(scrambled, occluded, coverage, cams).error <= 1e-3);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(reprojection_consistency(std::span<const Image>(images).first(3), depths, coverage, cams),
                        ValidationError);
        ConsistencyOptions o;
        o.sample_stride = 0;
        CHECK_THROWS_AS(reprojection_consistency(images, depths, coverage, cams, o), ValidationError);
    }
}

TEST_CASE("unedited renders are self-consistent") {
    for (std::uint64_t seed : {0u, 1u, 2u}) {
        SceneSpec s;
        s.seed = seed;
        const Scene sc = generate_scene(s);
        const RenderConfig rc;
        const DepthSet geo = render_depth_set(sc.mixture, sc.cameras, rc);
        const ConsistencyResult r =
            reprojection_consistency(render_all(sc.mixture, sc.cameras, rc), geo.depths, geo.coverage, sc.cameras);
        CHECK(r.samples > 1000);
        CHECK(r.error <= 0.01);
    }
}

TEST_CASE("per-view-random independent edits are far less consistent than edit_sequence") {
    for (std::uint64_t seed : {0u, 1u, 2u}) {
        SceneSpec s;
        s.seed = seed;
        const Scene sc = generate_scene(s);
        const RenderConfig rc;
        const DepthSet geo = render_depth_set(sc.mixture, sc.cameras, rc);
        const ViewSequence seq = render_sequence(sc.mixture, sc.cameras, rc);
        std::vector<Image> depths, coverage;
        for (std::size_t id : seq.ids) {
            depths.push_back(geo.depths[id]);
            coverage.push_back(geo.coverage[id]);
        }
        EditSpec spec;
        spec.kind = EditKind::per_view_random;
        spec.seed = seed;
        spec.normalize();
        const MockEditor editor;
        EditOptions opts;
        opts.seed = seed;
        const double joint = reprojection_consistency(edit_sequence(seq, spec, editor, opts).images, depths, coverage,
                                                      seq.cameras)
                                 .error;
        const double indep =
            reprojection_consistency(edit_independently(seq, spec, editor).images, depths, coverage, seq.cameras)
                .error;
        CHECK(indep >= 3.0 * joint);
    }
}

TEST_CASE("on uniform scenes the epipolar band never hurts consistency") {
    for (std::uint64_t seed : {0u, 4u}) {
        SceneSpec s;
        s.seed = seed;
        s.uniform = true;
        const Scene sc = generate_scene(s);
        for (const auto& p : sc.mixture.primitives()) {
            CHECK(p.sh[0] == doctest::Approx(sh_dc_from_color(SceneSpec::kUniformGray)));
        }
        const RenderConfig rc;
        const DepthSet geo = render_depth_set(sc.mixture, sc.cameras, rc);
        const ViewSequence seq = render_sequence(sc.mixture, sc.cameras, rc);
        std::vector<Image> depths, coverage;
        for (std::size_t id : seq.ids) {
            depths.push_back(geo.depths[id]);
            coverage.push_back(geo.coverage[id]);
        }
        EditSpec spec;
        spec.kind = EditKind::recolor_by_world_position;
        spec.parameters["axis"] = 1;
        spec.normalize();
        // attention off so the matcher alone decides the propagated edit
        const MockEditor editor(MockEditorConfig{.stride = 8, .stages = 4, .sharpness = 256.0, .attention = false});
        EditOptions on, off;
        off.match.epipolar = false;
        const double a =
            reprojection_consistency(edit_sequence(seq, spec, editor, on).images, depths, coverage, seq.cameras).error;
        const double b =
            reprojection_consistency(edit_sequence(seq, spec, editor, off).images, depths, coverage, seq.cameras).error;
        CHECK(b >= a);
    }
}

TEST_CASE("method names") {
    for (Method m : {Method::direct, Method::independent, Method::idu}) CHECK(method_from_string(to_string(m)) == m);
    CHECK_THROWS_AS(method_from_string("sds"), ValidationError);
}

TEST_CASE("run_experiment output contract and failure isolation") {
    SceneSpec s;
    s.gaussian_count = 60;
    s.camera_count = 6;
    s.image_size = 32;
    s.seed = 3;
    const Scene sc = generate_scene(s);
    EditSpec spec;
    spec.normalize();
    ExperimentConfig cfg;
    cfg.fit.iterations = 30;
    cfg.seed = 8;
    const fs::path out = fresh_dir("dge_experiment");
    const auto results = run_experiment(sc, spec, cfg, out);
    REQUIRE(results.size() == 3);
    CHECK(fs::exists(out / "timing.json"));
    for (const auto& r : results) {
        CHECK(r.error.empty());
        CHECK(r.seed == 8);
        REQUIRE(r.consistency_error);
        CHECK(std::isfinite(*r.consistency_error));
        CHECK(r.psnr.size() == 6);
        const fs::path dir = out / to_string(r.method);
        CHECK(count_prefixed(dir, "edited_") == 6);
        CHECK(count_prefixed(dir, "render_") == 6);
        CHECK(fs::exists(dir / "summary.json"));
        CHECK(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}) == 13);
        const auto j = io::read_json(dir / "summary.json");
        for (const char* key : {"method", "consistency_error", "psnr", "iterations_to_target", "duration_ms", "seed"}) {
            CHECK(j.contains(key));
        }
    }

    SUBCASE("a failing method is recorded and the rest still run") {
        ExperimentConfig bad = cfg;
        bad.fit.lr.sh = 50.0;  // diverges
        bad.methods = {Method::direct, Method::independent};
        const auto failed = run_experiment(sc, spec, bad, {});
        REQUIRE(failed.size() == 2);
        for (const auto& r : failed) {
            CHECK(r.error.find("diverged") != std::string::npos);
            CHECK(io::read_json(out / "direct" / "summary.json").contains("method"));
        }
        CHECK(failed[0].summary().contains("error"));
    }
    fs::remove_all(out);
}

TEST_CASE("a no-op edit through the direct pipeline reproduces the original renders") {
    SceneSpec s;
    s.gaussian_count = 60;
    s.camera_count = 6;
    s.image_size = 32;
    const Scene sc = generate_scene(s);
    EditSpec spec;
    spec.parameters["strength"] = 0.0;
    spec.normalize();
    ExperimentConfig cfg;
    cfg.methods = {Method::direct};
    cfg.fit.iterations = 50;
    const auto results = run_experiment(sc, spec, cfg);
    REQUIRE(results.size() == 1);
    REQUIRE(results[0].error.empty());
    const auto original = render_all(sc.mixture, sc.cameras);
    for (double p : results[0].psnr) CHECK(p >= 50.0);
    (void)original;
}

TEST_CASE("cli") {
    const fs::path dir = fresh_dir("dge_cli_test");
    const std::string d = dir.string();
    {
        std::ofstream(dir / "scene.json") << R"({"gaussian_count": 60, "camera_count": 5, "image_size": 32})";
        std::ofstream(dir / "edit.json") << R"({"kind": "style-tint"})";
        std::ofstream(dir / "fit.json") << R"({"iterations": 20})";
        std::ofstream(dir / "bad_edit.json") << R"({"kind": "sharpen"})";
        std::ofstream(dir / "bad_fit.json") << R"({"iterations": 0})";
        std::ofstream(dir / "diverge.json") << R"({"iterations": 50, "learning_rates": {"sh": 50.0}})";
    }
    const std::string scene = " --scene " + d + "/s.ply --cams " + d + "/c.json";

    REQUIRE(run_cli("gen --spec " + d + "/scene.json --out " + d + "/s.ply --cams " + d + "/c.json --seed 4") == 0);
    CHECK(io::read_ply(dir / "s.ply").size() == 60);
    CHECK(io::read_cameras(dir / "c.json").size() == 5);

    SUBCASE("render") {
        REQUIRE(run_cli("render" + scene + " --out " + d + "/r --depth") == 0);
        CHECK(count_prefixed(dir / "r", "view_") == 10);  // PNG and DGEIMG1
        CHECK(count_prefixed(dir / "r", "depth_") == 5);
        std::ofstream(dir / "sel.json") << io::read_json(dir / "s.ply.json").dump();  // not a mask
        CHECK(run_cli("render" + scene + " --out " + d + "/r2 --mask " + d + "/sel.json") == 1);
        CHECK_FALSE(fs::exists(dir / "r2"));
    }
    SUBCASE("edit, fit and exit codes") {
        REQUIRE(run_cli("edit" + scene + " --spec " + d + "/edit.json --out " + d + "/e") == 0);
        CHECK(count_prefixed(dir / "e", "edited_") == 10);
        CHECK(io::read_json(dir / "e" / "report.json").contains("consistency_error"));
        REQUIRE(run_cli("edit" + scene + " --spec " + d + "/edit.json --out " + d + "/e2 --independent --no-epipolar "
                        "--key-density 2 --band 2") == 0);
        REQUIRE(run_cli("fit" + scene + " --targets " + d + "/e --config " + d + "/fit.json --out " + d + "/f.ply") ==
                0);
        CHECK(io::read_ply(dir / "f.ply").size() == 60);
        CHECK(io::read_json(dir / "f.report.json").at("losses").size() == 20);

        CHECK(run_cli("edit" + scene + " --spec " + d + "/bad_edit.json --out " + d + "/bad1") == 1);
        CHECK_FALSE(fs::exists(dir / "bad1"));
        CHECK(run_cli("fit" + scene + " --targets " + d + "/e --config " + d + "/bad_fit.json --out " + d +
                      "/bad2.ply") == 1);
        CHECK_FALSE(fs::exists(dir / "bad2.ply"));
        CHECK(run_cli("fit" + scene + " --targets " + d + "/e --config " + d + "/diverge.json --out " + d +
                      "/bad3.ply") == 2);
        CHECK_FALSE(fs::exists(dir / "bad3.ply"));
        CHECK(run_cli("edit --scene " + d + "/missing.ply --cams " + d + "/c.json --spec " + d + "/edit.json --out " +
                      d + "/bad4") == 1);
        CHECK(run_cli("frobnicate") == 1);
        CHECK(run_cli("--help") == 0);
    }
    SUBCASE("compare is reproducible") {
        const std::string args = "compare" + scene + " --spec " + d + "/edit.json --config " + d +
                                 "/fit.json --methods direct,idu --seed 5 --out ";
        REQUIRE(run_cli(args + d + "/cmp1") == 0);
        REQUIRE(run_cli(args + d + "/cmp2") == 0);
        for (const char* m : {"direct", "idu"}) {
            const std::string a = slurp(dir / "cmp1" / m / "summary.json");
            CHECK_FALSE(a.empty());
            CHECK(a == slurp(dir / "cmp2" / m / "summary.json"));
        }
        CHECK_FALSE(fs::exists(dir / "cmp1" / "independent"));
        CHECK(run_cli("compare" + scene + " --spec " + d + "/edit.json --methods direct,sds --out " + d + "/cmp3") ==
              1);
        CHECK_FALSE(fs::exists(dir / "cmp3"));
    }
    fs::remove_all(dir);
}
