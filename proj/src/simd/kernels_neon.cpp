// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#include "dge/simd/kernels.hpp"

#if defined(__aarch64__) || defined(__ARM_NEON)

#include <arm_neon.h>

#include <cmath>

namespace dge::simd::detail {
namespace {

// Two float64x2 accumulators hold lanes {0,1} and {2,3} of the canonical
// four-lane blocking.
double dot_neon(const double* a, const double* b, std::size_t n) {
    float64x2_t lo = vdupq_n_f64(0.0);
    float64x2_t hi = vdupq_n_f64(0.0);
    const std::size_t blocked = n - n % 4;
    for (std::size_t i = 0; i < blocked; i += 4) {
        lo = vaddq_f64(lo, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
        hi = vaddq_f64(hi, vmulq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
    }
    double s = (vgetq_lane_f64(lo, 0) + vgetq_lane_f64(lo, 1)) +
               (vgetq_lane_f64(hi, 0) + vgetq_lane_f64(hi, 1));
    for (std::size_t i = blocked; i < n; ++i) {
        const double p = a[i] * b[i];
        s = s + p;
    }
    return s;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(alpha);
    const std::size_t blocked = n - n % 2;
    for (std::size_t i = 0; i < blocked; i += 2) {
        vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(va, vld1q_f64(x + i))));
    }
    for (std::size_t i = blocked; i < n; ++i) {
        const double p = alpha * x[i];
        y[i] = y[i] + p;
    }
}

void conic_row_neon(double a, double b2dy, double cdydy, double dx0, double* out,
                    std::size_t n) {
    const float64x2_t va = vdupq_n_f64(a);
    const float64x2_t vb = vdupq_n_f64(b2dy);
    const float64x2_t vc = vdupq_n_f64(cdydy);
    const double step_data[2] = {0.0, 1.0};
    const float64x2_t step = vld1q_f64(step_data);
    const std::size_t blocked = n - n % 2;
    for (std::size_t k = 0; k < blocked; k += 2) {
        const float64x2_t idx = vaddq_f64(vdupq_n_f64(static_cast<double>(k)), step);
        const float64x2_t dx = vaddq_f64(vdupq_n_f64(dx0), idx);
        const float64x2_t t1 = vmulq_f64(vmulq_f64(va, dx), dx);
        const float64x2_t t2 = vmulq_f64(vb, dx);
        vst1q_f64(out + k, vaddq_f64(vaddq_f64(t1, t2), vc));
    }
    for (std::size_t k = blocked; k < n; ++k) {
        const double dx = dx0 + static_cast<double>(k);
        const double t1 = (a * dx) * dx;
        const double t2 = b2dy * dx;
        out[k] = (t1 + t2) + cdydy;
    }
}

double l1_residual_neon(const double* a, const double* b, double* sign, std::size_t n) {
    float64x2_t lo = vdupq_n_f64(0.0);
    float64x2_t hi = vdupq_n_f64(0.0);
    const std::size_t blocked = n - n % 4;
    auto sgn = [](double r) { return r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0); };
    for (std::size_t i = 0; i < blocked; i += 4) {
        const float64x2_t r0 = vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
        const float64x2_t r1 = vsubq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
        lo = vaddq_f64(lo, vabsq_f64(r0));
        hi = vaddq_f64(hi, vabsq_f64(r1));
        sign[i] = sgn(vgetq_lane_f64(r0, 0));
        sign[i + 1] = sgn(vgetq_lane_f64(r0, 1));
        sign[i + 2] = sgn(vgetq_lane_f64(r1, 0));
        sign[i + 3] = sgn(vgetq_lane_f64(r1, 1));
    }
    double s = (vgetq_lane_f64(lo, 0) + vgetq_lane_f64(lo, 1)) +
               (vgetq_lane_f64(hi, 0) + vgetq_lane_f64(hi, 1));
    for (std::size_t i = blocked; i < n; ++i) {
        const double r = a[i] - b[i];
        sign[i] = sgn(r);
        s = s + std::fabs(r);
    }
    return s;
}

}  // namespace

const Kernels neon_kernels{Isa::neon, &dot_neon, &axpy_neon, &conic_row_neon,
                           &l1_residual_neon};

}  // namespace dge::simd::detail

#endif
