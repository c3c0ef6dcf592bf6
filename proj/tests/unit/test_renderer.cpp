// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dge/renderer.hpp"
#include "test_util.hpp"

using namespace dge;
using namespace dge::testing;

namespace {

double linf(const Image& a, const Image& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.values()[i] - b.values()[i]));
    return m;
}

Camera axis_camera(int size = 64, double focal = 64.0) {
    return Camera(square_intrinsics(size, focal), Mat3::Identity(), Vec3::Zero());
}

RenderConfig oracle_config() {
    RenderConfig cfg;
    cfg.near = 0.5;
    cfg.far = 6.0;
    cfg.steps = 4096;
    return cfg;
}

}  // namespace

TEST_CASE("config validation") {
    RenderConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.near = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = RenderConfig{};
    cfg.far = cfg.near;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = RenderConfig{};
    cfg.steps = 1;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = RenderConfig{};
    cfg.cutoff = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("zero opacity renders the background exactly") {
    Rng rng(1);
    GaussianMixture mix = separated_scene(rng, 6, 0.6, 0.05, 0.15, 0.0, 0.0);
    const Camera cam = Camera::look_at(square_intrinsics(32, 32.0), Vec3(0, 0, -3), Vec3::Zero());
    RenderConfig cfg = oracle_config();
    cfg.steps = 256;
    cfg.background = Vec3(0.2, 0.4, 0.6);
    for (const Image& img : {splat_render(mix, cam, cfg), raymarch_render(mix, cam, cfg)}) {
        for (int y = 0; y < 32; ++y) {
            for (int x = 0; x < 32; ++x) {
                for (int c = 0; c < 3; ++c) CHECK(img.at(x, y, c) == cfg.background[c]);
            }
        }
    }
}

TEST_CASE("opaque on-axis Gaussian saturates to its color") {
    GaussianMixture mix(0);
    mix.add(make_gaussian(400.0, Vec3(0, 0, 3), Vec3::Constant(0.2), Vec4(1, 0, 0, 0), Vec3(0.9, 0.3, 0.1)));
    const Camera cam = axis_camera();
    RenderConfig cfg = oracle_config();
    const Image ray = raymarch_render(mix, cam, cfg);
    const Image spl = splat_render(mix, cam, cfg);
    for (int c = 0; c < 3; ++c) {
        CHECK(ray.at(32, 32, c) == doctest::Approx(mix[0].sh[c] * 0.28209479177387814).epsilon(1e-3));
        CHECK(spl.at(32, 32, c) == doctest::Approx(ray.at(32, 32, c)).epsilon(2e-3));
        CHECK(ray.at(0, 0, c) == 0.0);
        CHECK(spl.at(0, 0, c) == 0.0);
    }
}

TEST_CASE("ray-march quadrature self-convergence") {
    Rng rng(7);
    for (int scene = 0; scene < 2; ++scene) {
        const GaussianMixture mix = separated_scene(rng, 12, 0.7, 0.05, 0.2, 0.5, 6.0);
        const Camera cam = random_view(rng, square_intrinsics(24, 24.0), 3.0);
        RenderConfig a = oracle_config();
        RenderConfig b = a;
        a.steps = 4096;
        b.steps = 8192;
        CHECK(linf(raymarch_render(mix, cam, a), raymarch_render(mix, cam, b)) <= 1e-3);
    }
}

TEST_CASE("splatter matches the ray-march oracle") {
    SUBCASE("single Gaussian") {
        Rng rng(11);
        for (int trial = 0; trial < 3; ++trial) {
            GaussianMixture mix(0);
            mix.add(make_gaussian(uniform(rng, 1.0, 8.0), Vec3(uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3), 0.0),
                                  Vec3(uniform(rng, 0.03, 0.1), uniform(rng, 0.03, 0.1), uniform(rng, 0.03, 0.1)),
                                  random_quaternion(rng), Vec3(0.8, 0.5, 0.2)));
            const Camera cam = random_view(rng, square_intrinsics(64, 64.0), 3.0);
            const RenderConfig cfg = oracle_config();
            CHECK(linf(splat_render(mix, cam, cfg), raymarch_render(mix, cam, cfg)) <= 2e-2);
        }
    }
    SUBCASE("separated scene with SH") {
        Rng rng(12);
        const GaussianMixture mix = separated_scene(rng, 24, 0.8, 0.03, 0.1, 0.5, 8.0, 2);
        const Camera cam = random_view(rng, square_intrinsics(64, 64.0), 3.0);
        RenderConfig cfg = oracle_config();
        cfg.background = Vec3(0.1, 0.2, 0.3);
        CHECK(linf(splat_render(mix, cam, cfg), raymarch_render(mix, cam, cfg)) <= 2e-2);
    }
}

TEST_CASE("nearer Gaussian dominates and swapping depths swaps the result") {
    const Camera cam = axis_camera();
    const RenderConfig cfg = oracle_config();
    auto scene = [](double zr, double zb) {
        GaussianMixture mix(0);
        mix.add(make_gaussian(30.0, Vec3(0, 0, zr), Vec3::Constant(0.1), Vec4(1, 0, 0, 0), Vec3(1, 0, 0)));
        mix.add(make_gaussian(30.0, Vec3(0, 0, zb), Vec3::Constant(0.1), Vec4(1, 0, 0, 0), Vec3(0, 0, 1)));
        return mix;
    };
    const Image a = splat_render(scene(2.0, 4.0), cam, cfg);
    const Image b = splat_render(scene(4.0, 2.0), cam, cfg);
    CHECK(a.at(32, 32, 0) > 0.9);
    CHECK(a.at(32, 32, 2) < 0.1);
    CHECK(b.at(32, 32, 2) > 0.9);
    CHECK(b.at(32, 32, 0) < 0.1);
    CHECK(a.at(32, 32, 0) == doctest::Approx(b.at(32, 32, 2)).epsilon(1e-12));
}

TEST_CASE("compositing weights and residual sum to one") {
    Rng rng(3);
    for (int s = 0; s < 4; ++s) {
        const GaussianMixture mix = separated_scene(rng, 20, 0.6, 0.05, 0.3, 0.1, 20.0, 0, 2.0);
        const Camera cam = random_view(rng, square_intrinsics(16, 16.0), 2.5);
        RenderConfig cfg;
        std::vector<bool> all(mix.size(), true);
        const Image cover = render_mask(mix, cam, cfg, all);
        for (int y = 0; y < 16; ++y) {
            for (int x = 0; x < 16; ++x) {
                const PixelTrace t = trace_pixel(mix, cam, cfg, x, y);
                double sum = t.residual;
                for (const auto& c : t.contributions) {
                    CHECK(c.weight >= 0.0);
                    sum += c.weight;
                }
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
                CHECK(cover.at(x, y) + t.residual == doctest::Approx(1.0).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("mask rendering") {
    GaussianMixture mix(0);
    mix.add(make_gaussian(50.0, Vec3(-0.5, 0, 3), Vec3::Constant(0.1), Vec4(1, 0, 0, 0), Vec3(1, 1, 1)));
    mix.add(make_gaussian(50.0, Vec3(0.5, 0, 3), Vec3::Constant(0.1), Vec4(1, 0, 0, 0), Vec3(1, 1, 1)));
    const Camera cam = axis_camera();
    const RenderConfig cfg;
    const Image none = render_mask(mix, cam, cfg, {false, false});
    for (double v : none.values()) CHECK(v == 0.0);
    const Image left = render_mask(mix, cam, cfg, {true, false});
    const int lx = static_cast<int>(64.0 * -0.5 / 3.0 + 32.0);
    const int rx = static_cast<int>(64.0 * 0.5 / 3.0 + 32.0);
    CHECK(left.at(lx, 32) > 0.99);
    CHECK(left.at(rx, 32) < 1e-6);
    CHECK_THROWS_AS(render_mask(mix, cam, cfg, {true}), ValidationError);
}

TEST_CASE("depth rendering") {
    const Camera cam = axis_camera();
    RenderConfig cfg;
    SUBCASE("opaque Gaussian at depth 2") {
        GaussianMixture mix(0);
        const double s = 0.1;
        mix.add(make_gaussian(100.0, Vec3(0, 0, 2), Vec3::Constant(s), Vec4(1, 0, 0, 0), Vec3(1, 1, 1)));
        CHECK(std::fabs(render_depth(mix, cam, cfg).at(32, 32) - 2.0) <= 0.05 * (6.0 * s));
    }
    SUBCASE("empty scene is far") {
        GaussianMixture mix(0);
        mix.add(make_gaussian(0.0, Vec3(0, 0, 2), Vec3::Constant(0.1), Vec4(1, 0, 0, 0), Vec3(1, 1, 1)));
        const Image depth = render_depth(mix, cam, cfg);
        for (double v : depth.values()) CHECK(v == cfg.far);
    }
    SUBCASE("nearer opaque layer wins") {
        GaussianMixture mix(0);
        mix.add(make_gaussian(200.0, Vec3(0, 0, 2), Vec3(0.5, 0.5, 0.05), Vec4(1, 0, 0, 0), Vec3(1, 1, 1)));
        mix.add(make_gaussian(200.0, Vec3(0, 0, 4), Vec3(1.0, 1.0, 0.05), Vec4(1, 0, 0, 0), Vec3(1, 1, 1)));
        CHECK(render_depth(mix, cam, cfg).at(32, 32) == doctest::Approx(2.0).epsilon(1e-3));
    }
    SUBCASE("translation along the view axis shifts depth") {
        // One Gaussian per lateral cell, so every covered pixel has a single
        // contributor and the expected depth is exact.
        Rng rng(5);
        for (int s = 0; s < 5; ++s) {
            GaussianMixture mix(0);
            for (int gy = -2; gy <= 2; ++gy) {
                for (int gx = -2; gx <= 2; ++gx) {
                    mix.add(make_gaussian(uniform(rng, 0.5, 20.0),
                                          Vec3(0.5 * gx, 0.5 * gy, 3.0 + uniform(rng, -0.3, 0.3)),
                                          Vec3::Constant(uniform(rng, 0.02, 0.05)), random_quaternion(rng),
                                          Vec3(0.5, 0.5, 0.5)));
                }
            }
            const double delta = uniform(rng, -0.5, 0.5);
            GaussianMixture moved = mix;
            for (auto& p : moved.primitives()) p.mean.z() += delta;
            const std::vector<bool> all(mix.size(), true);
            const Image d0 = render_depth(mix, cam, cfg);
            const Image d1 = render_depth(moved, cam, cfg);
            const Image c0 = render_mask(mix, cam, cfg, all);
            const Image c1 = render_mask(moved, cam, cfg, all);
            int covered = 0;
            for (std::size_t p = 0; p < d0.size(); ++p) {
                if (c0.values()[p] < kDepthCoverageFloor || c1.values()[p] < kDepthCoverageFloor) continue;
                ++covered;
                CHECK(std::fabs(d1.values()[p] - d0.values()[p] - delta) <= 1e-3);
            }
            CHECK(covered > 25);
        }
    }
}

TEST_CASE("gradient basics") {
    GaussianMixture mix(0);
    mix.add(make_gaussian(2.0, Vec3(0, 0, 3), Vec3::Constant(0.2), Vec4(1, 0, 0, 0), Vec3(0.5, 0.5, 0.5)));
    const Camera cam = axis_camera();
    RenderConfig cfg;
    const MixtureGradients zero = render_with_gradients(mix, cam, cfg, Image(64, 64, 3));
    CHECK(zero.opacity[0] == 0.0);
    CHECK(zero.mean[0].isZero(0.0));
    CHECK(zero.scale[0].isZero(0.0));
    CHECK(zero.orientation[0].isZero(0.0));
    for (double v : zero.sh[0]) CHECK(v == 0.0);

    Image adj(64, 64, 3);
    adj.at(32, 32, 0) = 1.0;
    Image rendered;
    const MixtureGradients g = render_with_gradients(mix, cam, cfg, adj, &rendered);
    CHECK(g.sh[0][0] > 0.0);
    CHECK(rendered == splat_render(mix, cam, cfg));
    CHECK_THROWS_AS(render_with_gradients(mix, cam, cfg, Image(8, 8, 3)), ValidationError);
}

TEST_CASE("gradients match central differences") {
    Rng rng(2024);
    RenderConfig cfg;
    cfg.cutoff = 10.0;
    cfg.background = Vec3(0.3, 0.1, 0.2);
    for (int scene = 0; scene < 4; ++scene) {
        const int deg = scene % 3;
        const GaussianMixture mix = separated_scene(rng, 5, 0.5, 0.08, 0.25, 0.3, 3.0, deg, 1.5);
        const Camera cam = random_view(rng, square_intrinsics(32, 32.0), 2.5);
        const Image adj = random_image(rng, 32, 32, 3);
        const GradientCheck r = check_gradients(mix, cam, cfg, adj);
        INFO("scene " << scene << " opacity " << r.opacity << " mean " << r.mean << " scale " << r.scale
                      << " rot " << r.orientation << " sh " << r.sh);
        CHECK(r.worst() <= 1e-3);
    }
}
