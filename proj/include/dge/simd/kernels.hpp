// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string_view>

/// Data-parallel inner loops shared by the renderer, matcher and losses.
///
/// Every kernel exists as a scalar reference and as vector variants (AVX2 on
/// x86-64, NEON on AArch64). Reductions use a fixed four-lane blocking so the
/// scalar reference and every vector variant produce bit-identical results:
/// lane k accumulates elements i with i % 4 == k over the largest multiple of
/// four, the lanes are combined as (l0 + l1) + (l2 + l3), and the tail is added
/// in order. No variant uses fused multiply-add.
namespace dge::simd {

enum class Isa { scalar, avx2, neon };

struct Kernels {
    Isa isa;
    /// sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
    /// y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    /// Quadratic form of a 2x2 conic along a pixel row:
    /// out[k] = a*dx*dx + b2dy*dx + cdydy with dx = dx0 + k.
    /// Callers precompute b2dy = 2*b*dy and cdydy = c*dy*dy.
    void (*conic_row)(double a, double b2dy, double cdydy, double dx0, double* out,
                      std::size_t n);
    /// Returns sum_i |a[i] - b[i]| and writes sign(a[i] - b[i]) in {-1, 0, 1}.
    double (*l1_residual)(const double* a, const double* b, double* sign, std::size_t n);
};

bool isa_available(Isa isa);
std::string_view isa_name(Isa isa);

/// Kernel table for a specific instruction set. Throws std::runtime_error if
/// the instruction set is not available on this machine or build.
const Kernels& kernels_for(Isa isa);

/// Currently selected table. Defaults to the widest available variant; the
/// DGE_SIMD environment variable ("scalar", "avx2", "neon") overrides it.
const Kernels& kernels();
Isa active_isa();
void set_active_isa(Isa isa);

namespace detail {
extern const Kernels scalar_kernels;
#if defined(DGE_HAVE_AVX2_TU)
extern const Kernels avx2_kernels;
#endif
#if defined(__aarch64__) || defined(__ARM_NEON)
extern const Kernels neon_kernels;
#endif
}  // namespace detail

}  // namespace dge::simd
