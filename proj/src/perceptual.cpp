// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#include "dge/perceptual.hpp"

#include <array>
#include <cmath>
#include <vector>

#include "dge/simd/kernels.hpp"

namespace dge {
namespace {

constexpr int kScales = 3;
constexpr int kRadius = 5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

using Plane = std::vector<double>;

const std::array<double, 2 * kRadius + 1>& window() {
    static const auto taps = [] {
        std::array<double, 2 * kRadius + 1> t{};
        for (int k = -kRadius; k <= kRadius; ++k) t[k + kRadius] = std::exp(-(k * k) / (2.0 * 1.5 * 1.5));
        return t;
    }();
    return taps;
}

/// Sum of the window taps that stay inside [0, n) around each position.
std::vector<double> window_mass(int n) {
    const auto& g = window();
    std::vector<double> m(n, 0.0);
    for (int p = 0; p < n; ++p) {
        for (int k = -kRadius; k <= kRadius; ++k) {
            if (p + k >= 0 && p + k < n) m[p] += g[k + kRadius];
        }
    }
    return m;
}

struct Filter {
    int w, h;
    std::vector<double> mass;  ///< 2D window mass per pixel

    Filter(int width, int height) : w(width), h(height), mass(static_cast<std::size_t>(width) * height) {
        const auto mx = window_mass(w);
        const auto my = window_mass(h);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) mass[static_cast<std::size_t>(y) * w + x] = mx[x] * my[y];
        }
    }

    /// Unnormalized separable convolution with the window, zero outside.
    Plane convolve(const Plane& in) const {
        const auto& g = window();
        const auto& kern = simd::kernels();
        Plane tmp(in.size(), 0.0), out(in.size(), 0.0);
        for (int y = 0; y < h; ++y) {
            const double* src = in.data() + static_cast<std::size_t>(y) * w;
            double* dst = tmp.data() + static_cast<std::size_t>(y) * w;
            for (int k = -kRadius; k <= kRadius; ++k) {
                const int lo = std::max(0, -k);
                const int hi = std::min(w, w - k);
                if (hi > lo) kern.axpy(g[k + kRadius], src + lo + k, dst + lo, static_cast<std::size_t>(hi - lo));
            }
        }
        for (int y = 0; y < h; ++y) {
            double* dst = out.data() + static_cast<std::size_t>(y) * w;
            for (int k = -kRadius; k <= kRadius; ++k) {
                if (y + k < 0 || y + k >= h) continue;
                kern.axpy(g[k + kRadius], tmp.data() + static_cast<std::size_t>(y + k) * w, dst, static_cast<std::size_t>(w));
            }
        }
        return out;
    }

    /// Window mean, renormalized at the borders.
    Plane apply(const Plane& in) const {
        Plane out = convolve(in);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] /= mass[i];
        return out;
    }

    /// Adjoint of apply(); the window is symmetric so convolution is
    /// self-adjoint.
    Plane adjoint(const Plane& in) const {
        Plane scaled(in.size());
        for (std::size_t i = 0; i < in.size(); ++i) scaled[i] = in[i] / mass[i];
        return convolve(scaled);
    }
};

Plane product(const Plane& a, const Plane& b) {
    Plane out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

/// Returns sum over pixels of SSIM for one channel plane; when `grad` is
/// non-null adds d(sum)/d(x) * weight to it.
double ssim_sum(const Filter& f, const Plane& x, const Plane& y, Plane* grad, double weight) {
    const Plane mx = f.apply(x);
    const Plane my = f.apply(y);
    const Plane exx = f.apply(product(x, x));
    const Plane eyy = f.apply(product(y, y));
    const Plane exy = f.apply(product(x, y));
    const std::size_t n = x.size();
    double total = 0.0;
    Plane d_mx, d_exx, d_exy;
    if (grad) {
        d_mx.resize(n);
        d_exx.resize(n);
        d_exy.resize(n);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double mxy = mx[i] * my[i];
        const double mxx = mx[i] * mx[i];
        const double myy = my[i] * my[i];
        const double a1 = 2.0 * mxy + kC1;
        const double b1 = mxx + myy + kC1;
        const double cxy = exy[i] - mxy;
        const double a2 = 2.0 * cxy + kC2;
        const double b2 = (exx[i] - mxx) + (eyy[i] - myy) + kC2;
        const double s = (a1 * a2) / (b1 * b2);
        total += s;
        if (!grad) continue;
        // written so every term cancels exactly when x == y
        d_mx[i] = weight * s * ((2.0 * my[i] / a1 - 2.0 * mx[i] / b1) + (2.0 * mx[i] / b2 - 2.0 * my[i] / a2));
        d_exx[i] = weight * (-s / b2);
        d_exy[i] = weight * (2.0 * (a1 / b1) / b2);
    }
    if (grad) {
        const Plane t_mx = f.adjoint(d_mx);
        const Plane t_exx = f.adjoint(d_exx);
        const Plane t_exy = f.adjoint(d_exy);
        for (std::size_t i = 0; i < n; ++i) (*grad)[i] += t_mx[i] + (x[i] * (2.0 * t_exx[i]) + y[i] * t_exy[i]);
    }
    return total;
}

Plane downsample(const Plane& in, int w, int h) {
    const int w2 = w / 2, h2 = h / 2;
    Plane out(static_cast<std::size_t>(w2) * h2);
    for (int y = 0; y < h2; ++y) {
        for (int x = 0; x < w2; ++x) {
            const std::size_t i = static_cast<std::size_t>(2 * y) * w + 2 * x;
            out[static_cast<std::size_t>(y) * w2 + x] = 0.25 * ((in[i] + in[i + 1]) + (in[i + w] + in[i + w + 1]));
        }
    }
    return out;
}

void upsample_add(const Plane& coarse, int w, int h, Plane& fine) {
    const int w2 = w / 2, h2 = h / 2;
    for (int y = 0; y < h2; ++y) {
        for (int x = 0; x < w2; ++x) {
            const double g = 0.25 * coarse[static_cast<std::size_t>(y) * w2 + x];
            const std::size_t i = static_cast<std::size_t>(2 * y) * w + 2 * x;
            fine[i] += g;
            fine[i + 1] += g;
            fine[i + w] += g;
            fine[i + w + 1] += g;
        }
    }
}

double evaluate(const Image& a, const Image& b, Image* grad_a) {
    if (!a.same_shape(b)) throw ValidationError("perceptual_proxy: image shapes differ");
    const int w0 = a.width(), h0 = a.height();
    if (w0 < (1 << (kScales - 1)) * 2 || h0 < (1 << (kScales - 1)) * 2) {
        throw ValidationError("perceptual_proxy: images must be at least 4 pixels on each side");
    }
    const int ch = a.channels();
    if (grad_a) *grad_a = Image(w0, h0, ch);
    double proxy = 0.0;
    for (int c = 0; c < ch; ++c) {
        Plane x(static_cast<std::size_t>(w0) * h0), y(x.size());
        for (std::size_t p = 0; p < x.size(); ++p) {
            x[p] = a.values()[p * ch + c];
            y[p] = b.values()[p * ch + c];
        }
        std::vector<Plane> xs{x}, ys{y};
        std::vector<std::pair<int, int>> dims{{w0, h0}};
        for (int s = 1; s < kScales; ++s) {
            const auto [w, h] = dims.back();
            xs.push_back(downsample(xs.back(), w, h));
            ys.push_back(downsample(ys.back(), w, h));
            dims.emplace_back(w / 2, h / 2);
        }
        std::vector<Plane> grads(kScales);
        for (int s = 0; s < kScales; ++s) {
            const auto [w, h] = dims[s];
            const Filter f(w, h);
            // d proxy / d ssim_pixel = -1 / (scales * pixels * channels)
            const double weight = -1.0 / (kScales * static_cast<double>(w) * h * ch);
            if (grad_a) grads[s].assign(xs[s].size(), 0.0);
            const double sum = ssim_sum(f, xs[s], ys[s], grad_a ? &grads[s] : nullptr, weight);
            proxy += (1.0 / kScales) * (1.0 / ch) * (1.0 - sum / (static_cast<double>(w) * h));
        }
        if (!grad_a) continue;
        for (int s = kScales - 1; s > 0; --s) {
            const auto [w, h] = dims[s - 1];
            upsample_add(grads[s], w, h, grads[s - 1]);
        }
        for (std::size_t p = 0; p < x.size(); ++p) grad_a->values()[p * ch + c] = grads[0][p];
    }
    return proxy;
}

}  // namespace

double perceptual_proxy(const Image& a, const Image& b) { return evaluate(a, b, nullptr); }

double perceptual_proxy_grad(const Image& a, const Image& b, Image* grad_a) { return evaluate(a, b, grad_a); }

}  // namespace dge
