// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

// Compiled with -mavx2 (no -mfma). Only reached after a runtime CPU check.

#include "dge/simd/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace dge::simd::detail {
namespace {

inline double reduce_lanes(__m256d v) {
    alignas(32) double lane[4];
    _mm256_store_pd(lane, v);
    return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    const std::size_t blocked = n - n % 4;
    for (std::size_t i = 0; i < blocked; i += 4) {
        const __m256d p = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        acc = _mm256_add_pd(acc, p);
    }
    double s = reduce_lanes(acc);
    for (std::size_t i = blocked; i < n; ++i) {
        const double p = a[i] * b[i];
        s = s + p;
    }
    return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    const std::size_t blocked = n - n % 4;
    for (std::size_t i = 0; i < blocked; i += 4) {
        const __m256d p = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), p));
    }
    for (std::size_t i = blocked; i < n; ++i) {
        const double p = alpha * x[i];
        y[i] = y[i] + p;
    }
}

void conic_row_avx2(double a, double b2dy, double cdydy, double dx0, double* out,
                    std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    const __m256d vb = _mm256_set1_pd(b2dy);
    const __m256d vc = _mm256_set1_pd(cdydy);
    const __m256d step = _mm256_set_pd(3.0, 2.0, 1.0, 0.0);
    const std::size_t blocked = n - n % 4;
    for (std::size_t k = 0; k < blocked; k += 4) {
        // dx0 + k + lane: k + lane is an exact small integer, so this matches
        // the scalar dx0 + double(k + lane).
        const __m256d idx = _mm256_add_pd(_mm256_set1_pd(static_cast<double>(k)), step);
        const __m256d dx = _mm256_add_pd(_mm256_set1_pd(dx0), idx);
        const __m256d t1 = _mm256_mul_pd(_mm256_mul_pd(va, dx), dx);
        const __m256d t2 = _mm256_mul_pd(vb, dx);
        _mm256_storeu_pd(out + k, _mm256_add_pd(_mm256_add_pd(t1, t2), vc));
    }
    for (std::size_t k = blocked; k < n; ++k) {
        const double dx = dx0 + static_cast<double>(k);
        const double t1 = (a * dx) * dx;
        const double t2 = b2dy * dx;
        out[k] = (t1 + t2) + cdydy;
    }
}

double l1_residual_avx2(const double* a, const double* b, double* sign, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d abs_mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
    __m256d acc = zero;
    const std::size_t blocked = n - n % 4;
    for (std::size_t i = 0; i < blocked; i += 4) {
        const __m256d r = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        const __m256d pos = _mm256_and_pd(_mm256_cmp_pd(r, zero, _CMP_GT_OQ), one);
        const __m256d neg = _mm256_and_pd(_mm256_cmp_pd(r, zero, _CMP_LT_OQ), one);
        _mm256_storeu_pd(sign + i, _mm256_sub_pd(pos, neg));
        acc = _mm256_add_pd(acc, _mm256_and_pd(r, abs_mask));
    }
    double s = reduce_lanes(acc);
    for (std::size_t i = blocked; i < n; ++i) {
        const double r = a[i] - b[i];
        sign[i] = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
        s = s + std::fabs(r);
    }
    return s;
}

}  // namespace

const Kernels avx2_kernels{Isa::avx2, &dot_avx2, &axpy_avx2, &conic_row_avx2,
                           &l1_residual_avx2};

}  // namespace dge::simd::detail
