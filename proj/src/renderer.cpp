// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#include "dge/renderer.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "dge/simd/kernels.hpp"

namespace dge {

void RenderConfig::validate() const {
    if (!(near > 0.0) || !(far > near)) throw ValidationError("render config: need 0 < near < far");
    if (steps < 2) throw ValidationError("render config: steps must be >= 2");
    if (!(cutoff > 0.0)) throw ValidationError("render config: cutoff must be positive");
    if (!background.allFinite()) throw ValidationError("render config: background must be finite");
}

namespace {

constexpr double kAlphaMax = 0.999;
const double kSqrt2Pi = std::sqrt(2.0 * std::numbers::pi);

using Mat23 = Eigen::Matrix<double, 2, 3>;

/// One Gaussian projected into a camera.
struct Splat {
    std::size_t index = 0;
    Vec3 pc = Vec3::Zero();  ///< mean in camera frame
    Vec2 center = Vec2::Zero();
    double ca = 0.0, cb = 0.0, cc = 0.0;  ///< conic (inverse 2D covariance)
    Mat3 rot = Mat3::Identity();          ///< R(orientation)
    Mat3 sigma = Mat3::Identity();
    Mat3 prec = Mat3::Identity();
    Mat23 jac = Mat23::Zero();
    Vec3 nu = Vec3::UnitZ();  ///< unit direction from the mean toward the camera
    double dist = 1.0;        ///< |camera center - mean|
    Vec3 color = Vec3::Zero();
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
};

struct Plan {
    int width = 0;
    int height = 0;
    std::vector<Splat> splats;  ///< sorted front to back
    std::vector<Vec3> dirs;     ///< unit world ray direction per pixel
};

Plan make_plan(const GaussianMixture& mix, const Camera& cam, const RenderConfig& cfg) {
    cfg.validate();
    const Intrinsics& k = cam.intrinsics();
    Plan plan;
    plan.width = k.width;
    plan.height = k.height;
    plan.dirs.resize(static_cast<std::size_t>(k.width) * k.height);
    for (int y = 0; y < k.height; ++y) {
        for (int x = 0; x < k.width; ++x) {
            plan.dirs[static_cast<std::size_t>(y) * k.width + x] = cam.ray_direction(x + 0.5, y + 0.5);
        }
    }
    const Mat3& w = cam.rotation();
    const Vec3 cam_center = cam.center();
    const int basis_n = sh_basis_count(mix.sh_degree());
    double basis[sh_basis_count(kMaxShDegree)];
    for (std::size_t i = 0; i < mix.size(); ++i) {
        const GaussianPrimitive& g = mix[i];
        Splat s;
        s.index = i;
        s.pc = cam.to_camera(g.mean);
        const double z = s.pc.z();
        if (!(z > cfg.near)) continue;
        s.center = Vec2(k.fx * s.pc.x() / z + k.cx, k.fy * s.pc.y() / z + k.cy);
        s.jac << k.fx / z, 0.0, -k.fx * s.pc.x() / (z * z), 0.0, k.fy / z, -k.fy * s.pc.y() / (z * z);
        s.rot = rotation_matrix(g.orientation);
        const Mat3 ms = s.rot * g.scale.asDiagonal();
        s.sigma = ms * ms.transpose();
        const Mat3 mp = s.rot * g.scale.cwiseInverse().asDiagonal();
        s.prec = mp * mp.transpose();
        const Mat23 m = s.jac * w;
        const Mat2 cov2 = m * s.sigma * m.transpose();
        const double det = cov2(0, 0) * cov2(1, 1) - cov2(0, 1) * cov2(1, 0);
        if (!(det > 0.0)) continue;
        s.ca = cov2(1, 1) / det;
        s.cb = -0.5 * (cov2(0, 1) + cov2(1, 0)) / det;
        s.cc = cov2(0, 0) / det;
        const double hx = cfg.cutoff * std::sqrt(cov2(0, 0));
        const double hy = cfg.cutoff * std::sqrt(cov2(1, 1));
        s.x0 = std::max(0, static_cast<int>(std::ceil(s.center.x() - hx - 0.5)));
        s.x1 = std::min(k.width - 1, static_cast<int>(std::floor(s.center.x() + hx - 0.5)));
        s.y0 = std::max(0, static_cast<int>(std::ceil(s.center.y() - hy - 0.5)));
        s.y1 = std::min(k.height - 1, static_cast<int>(std::floor(s.center.y() + hy - 0.5)));
        if (s.x0 > s.x1 || s.y0 > s.y1) continue;
        const Vec3 to_cam = cam_center - g.mean;
        s.dist = to_cam.norm();
        s.nu = to_cam / s.dist;
        sh_basis(mix.sh_degree(), s.nu, basis);
        for (int b = 0; b < basis_n; ++b) {
            for (int j = 0; j < 3; ++j) s.color[j] += g.sh[b * 3 + j] * basis[b];
        }
        plan.splats.push_back(s);
    }
    std::sort(plan.splats.begin(), plan.splats.end(), [](const Splat& a, const Splat& b) {
        if (a.pc.z() != b.pc.z()) return a.pc.z() < b.pc.z();
        return a.index < b.index;
    });
    return plan;
}

/// Everything the backward pass needs about one (Gaussian, pixel) fragment.
struct Fragment {
    std::size_t pixel;
    double dx, dy;  ///< pixel center minus projected mean
    double q;       ///< squared Mahalanobis distance in the image plane
    double ghat;    ///< projected footprint exp(-q/2)
    double dpd;     ///< d^T Sigma^-1 d for the pixel ray
    double tau;     ///< ray integral of g_i
    double s;       ///< optical depth sigma * tau * ghat
    double alpha;
    bool clamped;
};

/// Visits the fragments of one splat in row-major pixel order. `fn` sees
/// only fragments inside the cutoff with non-zero alpha.
template <typename Fn>
void for_each_fragment(const Plan& plan, const Splat& sp, double opacity, const RenderConfig& cfg,
                       std::vector<double>& qbuf, Fn&& fn) {
    const auto& kern = simd::kernels();
    const double cutoff2 = cfg.cutoff * cfg.cutoff;
    const std::size_t n = static_cast<std::size_t>(sp.x1 - sp.x0 + 1);
    qbuf.resize(n);
    const double dx0 = (sp.x0 + 0.5) - sp.center.x();
    for (int y = sp.y0; y <= sp.y1; ++y) {
        const double dy = (y + 0.5) - sp.center.y();
        const double b2dy = (2.0 * sp.cb) * dy;
        const double cdydy = (sp.cc * dy) * dy;
        kern.conic_row(sp.ca, b2dy, cdydy, dx0, qbuf.data(), n);
        for (std::size_t k = 0; k < n; ++k) {
            const double q = qbuf[k];
            if (q > cutoff2) continue;
            Fragment f;
            f.pixel = static_cast<std::size_t>(y) * plan.width + (sp.x0 + static_cast<int>(k));
            f.dx = dx0 + static_cast<double>(k);
            f.dy = dy;
            f.q = q;
            f.ghat = std::exp(-0.5 * q);
            const Vec3& d = plan.dirs[f.pixel];
            f.dpd = d.dot(sp.prec * d);
            f.tau = kSqrt2Pi / std::sqrt(f.dpd);
            f.s = opacity * f.tau * f.ghat;
            f.alpha = -std::expm1(-f.s);
            f.clamped = f.alpha > kAlphaMax;
            if (f.clamped) f.alpha = kAlphaMax;
            if (!(f.alpha > 0.0)) continue;
            fn(f);
        }
    }
}

/// Front-to-back compositing; `emit(splat, pixel, weight)` receives every
/// weight alpha_i * T_i. Returns the residual transmittance per pixel.
template <typename Emit>
std::vector<double> composite(const Plan& plan, const GaussianMixture& mix, const RenderConfig& cfg,
                              Emit&& emit) {
    std::vector<double> trans(static_cast<std::size_t>(plan.width) * plan.height, 1.0);
    std::vector<double> qbuf;
    for (const Splat& sp : plan.splats) {
        for_each_fragment(plan, sp, mix[sp.index].opacity, cfg, qbuf, [&](const Fragment& f) {
            const double wgt = f.alpha * trans[f.pixel];
            emit(sp, f.pixel, wgt);
            trans[f.pixel] *= (1.0 - f.alpha);
        });
    }
    return trans;
}

Image color_image(const Plan& plan, const GaussianMixture& mix, const RenderConfig& cfg,
                  std::vector<double>* trans_out = nullptr) {
    Image img(plan.width, plan.height, 3);
    auto& data = img.values();
    auto trans = composite(plan, mix, cfg, [&](const Splat& sp, std::size_t p, double wgt) {
        for (int j = 0; j < 3; ++j) data[p * 3 + j] += wgt * sp.color[j];
    });
    for (std::size_t p = 0; p < trans.size(); ++p) {
        for (int j = 0; j < 3; ++j) data[p * 3 + j] += trans[p] * cfg.background[j];
    }
    if (trans_out) *trans_out = std::move(trans);
    return img;
}

// d R(q) / d q for a unit quaternion (w, x, y, z), contracted with dL/dR.
Vec4 rotation_vjp(const Vec4& q, const Mat3& g) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Vec4 d;
    d[0] = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    d[1] = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) +
                  z * g(2, 0) + w * g(2, 1) - 2.0 * x * g(2, 2));
    d[2] = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
                  w * g(2, 0) + z * g(2, 1) - 2.0 * y * g(2, 2));
    d[3] = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1) +
                  y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
    return d;
}

/// Per-splat accumulators filled by the pixel loop of the backward pass.
struct SplatGrad {
    double opacity = 0.0;
    Vec2 center = Vec2::Zero();
    Mat2 conic = Mat2::Zero();  ///< dL/dA treating all four entries as free
    Mat3 prec = Mat3::Zero();   ///< dL/dP treating all nine entries as free
    Vec3 color = Vec3::Zero();
};

}  // namespace

Image raymarch_render(const GaussianMixture& mix, const Camera& cam, const RenderConfig& cfg) {
    cfg.validate();
    constexpr double kReach2 = 64.0;  // 8 Mahalanobis units
    const int w = cam.width(), h = cam.height();
    const double dt = (cfg.far - cfg.near) / cfg.steps;
    const Vec3 origin = cam.center();
    const int basis_n = sh_basis_count(mix.sh_degree());

    std::vector<Mat3> prec(mix.size());
    for (std::size_t i = 0; i < mix.size(); ++i) prec[i] = precision(mix[i]);

    struct Hit {
        std::size_t index;
        double a, b, c;  // q(t) = a t^2 + 2 b t + c
        int k0, k1;      // sample index range where q <= kReach2
        Vec3 color;
    };
    Image img(w, h, 3);
    std::vector<Hit> hits;
    std::vector<std::pair<int, int>> spans;
    double basis[sh_basis_count(kMaxShDegree)];
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Vec3 d = cam.ray_direction(x + 0.5, y + 0.5);
            hits.clear();
            sh_basis(mix.sh_degree(), -d, basis);
            for (std::size_t i = 0; i < mix.size(); ++i) {
                const GaussianPrimitive& g = mix[i];
                if (g.opacity == 0.0) continue;
                const Vec3 delta = origin - g.mean;
                const Vec3 pd = prec[i] * d;
                const double a = d.dot(pd);
                const double b = delta.dot(pd);
                const double c = delta.dot(prec[i] * delta);
                const double qmin = c - b * b / a;
                if (qmin > kReach2) continue;
                const double tc = -b / a;
                const double half = std::sqrt((kReach2 - qmin) / a);
                const double lo = std::max(cfg.near, tc - half);
                const double hi = std::min(cfg.far, tc + half);
                if (lo >= hi) continue;
                // samples t_k = near + (k + 0.5) dt with lo <= t_k <= hi
                const int k0 = std::max(0, static_cast<int>(std::ceil((lo - cfg.near) / dt - 0.5)));
                const int k1 = std::min(cfg.steps - 1, static_cast<int>(std::floor((hi - cfg.near) / dt - 0.5)));
                if (k0 > k1) continue;
                Vec3 col = Vec3::Zero();
                for (int bi = 0; bi < basis_n; ++bi) {
                    for (int j = 0; j < 3; ++j) col[j] += g.sh[bi * 3 + j] * basis[bi];
                }
                hits.push_back({i, a, b, c, k0, k1, col});
            }
            spans.clear();
            for (const Hit& hit : hits) spans.emplace_back(hit.k0, hit.k1);
            std::sort(spans.begin(), spans.end());
            double trans = 1.0;
            Vec3 acc = Vec3::Zero();
            int next = 0;  // first sample not yet integrated
            for (const auto& [s0, s1] : spans) {
                for (int k = std::max(s0, next); k <= s1; ++k) {
                    const double t = cfg.near + (k + 0.5) * dt;
                    double sigma = 0.0;
                    Vec3 emit = Vec3::Zero();
                    for (const Hit& hit : hits) {
                        if (k < hit.k0 || k > hit.k1) continue;
                        const double q = (hit.a * t + 2.0 * hit.b) * t + hit.c;
                        const double sg = mix[hit.index].opacity * std::exp(-0.5 * q);
                        sigma += sg;
                        emit += sg * hit.color;
                    }
                    if (sigma > 0.0) {
                        // piecewise-constant medium over the interval
                        const double absorbed = -std::expm1(-sigma * dt);
                        acc += emit * (trans * absorbed / sigma);
                        trans *= 1.0 - absorbed;
                    }
                }
                next = std::max(next, s1 + 1);
            }
            for (int j = 0; j < 3; ++j) img.at(x, y, j) = acc[j] + trans * cfg.background[j];
        }
    }
    return img;
}

Image splat_render(const GaussianMixture& mix, const Camera& cam, const RenderConfig& cfg) {
    const Plan plan = make_plan(mix, cam, cfg);
    return color_image(plan, mix, cfg);
}

MixtureGradients MixtureGradients::zeros_like(const GaussianMixture& mix) {
    MixtureGradients g;
    g.opacity.assign(mix.size(), 0.0);
    g.mean.assign(mix.size(), Vec3::Zero());
    g.scale.assign(mix.size(), Vec3::Zero());
    g.orientation.assign(mix.size(), Vec4::Zero());
    g.sh.resize(mix.size());
    for (std::size_t i = 0; i < mix.size(); ++i) g.sh[i].assign(mix[i].sh.size(), 0.0);
    return g;
}

void MixtureGradients::add(const MixtureGradients& o) {
    for (std::size_t i = 0; i < opacity.size(); ++i) {
        opacity[i] += o.opacity[i];
        mean[i] += o.mean[i];
        scale[i] += o.scale[i];
        orientation[i] += o.orientation[i];
        for (std::size_t k = 0; k < sh[i].size(); ++k) sh[i][k] += o.sh[i][k];
    }
}

bool MixtureGradients::all_finite() const {
    for (std::size_t i = 0; i < opacity.size(); ++i) {
        if (!std::isfinite(opacity[i]) || !mean[i].allFinite() || !scale[i].allFinite() ||
            !orientation[i].allFinite()) {
            return false;
        }
        for (double v : sh[i]) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

MixtureGradients render_with_gradients(const GaussianMixture& mix, const Camera& cam,
                                       const RenderConfig& cfg, const Image& adjoint,
                                       Image* rendered) {
    const Plan plan = make_plan(mix, cam, cfg);
    if (adjoint.width() != plan.width || adjoint.height() != plan.height || adjoint.channels() != 3) {
        throw ValidationError("render_with_gradients: adjoint must match the rendered image shape");
    }
    std::vector<double> trans;
    Image forward = color_image(plan, mix, cfg, &trans);

    // Walk the splats back to front. `behind` holds the color composited
    // behind the current splat (including the background); `trans` is turned
    // back into the transmittance in front of each splat by dividing out
    // (1 - alpha).
    const std::size_t npx = trans.size();
    std::vector<double> behind(npx * 3);
    for (std::size_t p = 0; p < npx; ++p) {
        for (int j = 0; j < 3; ++j) behind[p * 3 + j] = trans[p] * cfg.background[j];
    }
    const auto& adj = adjoint.values();
    std::vector<SplatGrad> acc(plan.splats.size());
    std::vector<double> qbuf;
    for (std::size_t si = plan.splats.size(); si-- > 0;) {
        const Splat& sp = plan.splats[si];
        const double opacity = mix[sp.index].opacity;
        SplatGrad& ga = acc[si];
        for_each_fragment(plan, sp, opacity, cfg, qbuf, [&](const Fragment& f) {
            const std::size_t p = f.pixel;
            const double t_front = trans[p] / (1.0 - f.alpha);
            double d_alpha = 0.0;
            for (int j = 0; j < 3; ++j) {
                const double g = adj[p * 3 + j];
                ga.color[j] += g * f.alpha * t_front;
                d_alpha += g * (sp.color[j] * t_front - behind[p * 3 + j] / (1.0 - f.alpha));
                behind[p * 3 + j] += sp.color[j] * f.alpha * t_front;
            }
            trans[p] = t_front;
            if (f.clamped) return;
            const double d_s = d_alpha * std::exp(-f.s);
            ga.opacity += d_s * f.tau * f.ghat;
            const double d_tau = d_s * opacity * f.ghat;
            const double d_ghat = d_s * opacity * f.tau;
            const double d_q = d_ghat * (-0.5 * f.ghat);
            // q = [dx dy] A [dx dy]^T with d(center) = -d(dx, dy)
            ga.center.x() += -2.0 * d_q * (sp.ca * f.dx + sp.cb * f.dy);
            ga.center.y() += -2.0 * d_q * (sp.cb * f.dx + sp.cc * f.dy);
            ga.conic(0, 0) += d_q * f.dx * f.dx;
            ga.conic(0, 1) += d_q * f.dx * f.dy;
            ga.conic(1, 1) += d_q * f.dy * f.dy;
            // tau = sqrt(2 pi) (d^T P d)^(-1/2)
            const double d_dpd = d_tau * (-0.5 * f.tau / f.dpd);
            const Vec3& d = plan.dirs[p];
            ga.prec.noalias() += d_dpd * (d * d.transpose());
        });
    }

    MixtureGradients grads = MixtureGradients::zeros_like(mix);
    const Intrinsics& k = cam.intrinsics();
    const Mat3& w = cam.rotation();
    const int basis_n = sh_basis_count(mix.sh_degree());
    double basis[sh_basis_count(kMaxShDegree)];
    Vec3 basis_grad[sh_basis_count(kMaxShDegree)];
    for (std::size_t si = 0; si < plan.splats.size(); ++si) {
        const Splat& sp = plan.splats[si];
        SplatGrad& ga = acc[si];
        ga.conic(1, 0) = ga.conic(0, 1);
        const GaussianPrimitive& g = mix[sp.index];
        const std::size_t i = sp.index;

        grads.opacity[i] += ga.opacity;

        // Color through the SH basis.
        sh_basis(mix.sh_degree(), sp.nu, basis, basis_grad);
        Vec3 d_nu = Vec3::Zero();
        for (int b = 0; b < basis_n; ++b) {
            for (int j = 0; j < 3; ++j) {
                grads.sh[i][b * 3 + j] += ga.color[j] * basis[b];
                d_nu += (ga.color[j] * g.sh[b * 3 + j]) * basis_grad[b];
            }
        }
        Vec3 d_mean = Vec3::Zero();
        if (mix.sh_degree() > 0) {
            // nu = (C - mu) / |C - mu|
            d_mean -= (d_nu - sp.nu * sp.nu.dot(d_nu)) / sp.dist;
        }

        // Conic -> 2D covariance -> (J, Sigma).
        Mat2 conic;
        conic << sp.ca, sp.cb, sp.cb, sp.cc;
        const Mat2 d_cov2 = -conic * ga.conic * conic;
        const Mat23 m = sp.jac * w;
        Mat3 d_sigma = m.transpose() * d_cov2 * m;
        const Mat23 d_m = 2.0 * d_cov2 * m * sp.sigma;
        const Mat23 d_jac = d_m * w.transpose();

        const double x = sp.pc.x(), y = sp.pc.y(), z = sp.pc.z();
        const double z2 = z * z, z3 = z2 * z;
        Vec3 d_pc = sp.jac.transpose() * ga.center;
        d_pc.x() += d_jac(0, 2) * (-k.fx / z2);
        d_pc.y() += d_jac(1, 2) * (-k.fy / z2);
        d_pc.z() += d_jac(0, 0) * (-k.fx / z2) + d_jac(0, 2) * (2.0 * k.fx * x / z3) +
                    d_jac(1, 1) * (-k.fy / z2) + d_jac(1, 2) * (2.0 * k.fy * y / z3);
        d_mean += w.transpose() * d_pc;
        grads.mean[i] += d_mean;

        // Precision path: P = Sigma^-1.
        d_sigma -= sp.prec * ga.prec * sp.prec;
        const Mat3 d_sigma_sym = 0.5 * (d_sigma + d_sigma.transpose());

        // Sigma = Ms Ms^T with Ms = R diag(scale).
        const Mat3 ms = sp.rot * g.scale.asDiagonal();
        const Mat3 d_ms = 2.0 * d_sigma_sym * ms;
        Mat3 d_rot;
        for (int c = 0; c < 3; ++c) {
            grads.scale[i][c] += d_ms.col(c).dot(sp.rot.col(c));
            d_rot.col(c) = d_ms.col(c) * g.scale[c];
        }
        const double qn = g.orientation.norm();
        const Vec4 qhat = g.orientation / qn;
        const Vec4 d_qhat = rotation_vjp(qhat, d_rot);
        grads.orientation[i] += (d_qhat - qhat * qhat.dot(d_qhat)) / qn;
    }
    if (rendered) *rendered = std::move(forward);
    return grads;
}

Image render_depth(const GaussianMixture& mix, const Camera& cam, const RenderConfig& cfg) {
    const Plan plan = make_plan(mix, cam, cfg);
    std::vector<double> num(static_cast<std::size_t>(plan.width) * plan.height, 0.0);
    std::vector<double> cover(num.size(), 0.0);
    composite(plan, mix, cfg, [&](const Splat& sp, std::size_t p, double wgt) {
        num[p] += wgt * sp.pc.z();
        cover[p] += wgt;
    });
    Image img(plan.width, plan.height, 1);
    for (std::size_t p = 0; p < num.size(); ++p) {
        img.values()[p] = cover[p] >= kDepthCoverageFloor ? num[p] / cover[p] : cfg.far;
    }
    return img;
}

Image render_mask(const GaussianMixture& mix, const Camera& cam, const RenderConfig& cfg,
                  const std::vector<bool>& selected) {
    if (selected.size() != mix.size()) throw ValidationError("render_mask: selection length differs from primitive count");
    const Plan plan = make_plan(mix, cam, cfg);
    Image img(plan.width, plan.height, 1);
    auto& data = img.values();
    composite(plan, mix, cfg, [&](const Splat& sp, std::size_t p, double wgt) {
        if (selected[sp.index]) data[p] += wgt;
    });
    return img;
}

PixelTrace trace_pixel(const GaussianMixture& mix, const Camera& cam, const RenderConfig& cfg, int x,
                       int y) {
    if (x < 0 || y < 0 || x >= cam.width() || y >= cam.height()) throw ValidationError("trace_pixel: pixel outside the image");
    const Plan plan = make_plan(mix, cam, cfg);
    const std::size_t target = static_cast<std::size_t>(y) * plan.width + x;
    PixelTrace out;
    auto trans = composite(plan, mix, cfg, [&](const Splat& sp, std::size_t p, double wgt) {
        if (p == target) out.contributions.push_back({sp.index, wgt});
    });
    out.residual = trans[target];
    return out;
}

}  // namespace dge
