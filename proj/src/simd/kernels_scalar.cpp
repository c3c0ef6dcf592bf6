// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#include "dge/simd/kernels.hpp"

#include <cmath>

namespace dge::simd::detail {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double lane[4] = {0.0, 0.0, 0.0, 0.0};
    const std::size_t blocked = n - n % 4;
    for (std::size_t i = 0; i < blocked; i += 4) {
        for (std::size_t k = 0; k < 4; ++k) {
            const double p = a[i + k] * b[i + k];
            lane[k] = lane[k] + p;
        }
    }
    double s = (lane[0] + lane[1]) + (lane[2] + lane[3]);
    for (std::size_t i = blocked; i < n; ++i) {
        const double p = a[i] * b[i];
        s = s + p;
    }
    return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double p = alpha * x[i];
        y[i] = y[i] + p;
    }
}

void conic_row_scalar(double a, double b2dy, double cdydy, double dx0, double* out,
                      std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
        const double dx = dx0 + static_cast<double>(k);
        const double t1 = (a * dx) * dx;
        const double t2 = b2dy * dx;
        out[k] = (t1 + t2) + cdydy;
    }
}

double l1_residual_scalar(const double* a, const double* b, double* sign, std::size_t n) {
    auto sgn = [](double r) { return r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0); };
    double lane[4] = {0.0, 0.0, 0.0, 0.0};
    const std::size_t blocked = n - n % 4;
    for (std::size_t i = 0; i < blocked; i += 4) {
        for (std::size_t k = 0; k < 4; ++k) {
            const double r = a[i + k] - b[i + k];
            sign[i + k] = sgn(r);
            lane[k] = lane[k] + std::fabs(r);
        }
    }
    double s = (lane[0] + lane[1]) + (lane[2] + lane[3]);
    for (std::size_t i = blocked; i < n; ++i) {
        const double r = a[i] - b[i];
        sign[i] = sgn(r);
        s = s + std::fabs(r);
    }
    return s;
}

}  // namespace

const Kernels scalar_kernels{Isa::scalar, &dot_scalar, &axpy_scalar, &conic_row_scalar,
                             &l1_residual_scalar};

}  // namespace dge::simd::detail
