// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "dge/simd/kernels.hpp"

namespace dge::simd {
namespace {

Isa best_available() {
    if (isa_available(Isa::avx2)) return Isa::avx2;
    if (isa_available(Isa::neon)) return Isa::neon;
    return Isa::scalar;
}

Isa initial_isa() {
    if (const char* env = std::getenv("DGE_SIMD")) {
        const std::string want(env);
        for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
            if (want == isa_name(isa) && isa_available(isa)) return isa;
        }
    }
    return best_available();
}

std::atomic<const Kernels*>& active_table() {
    static std::atomic<const Kernels*> table{&kernels_for(initial_isa())};
    return table;
}

}  // namespace

bool isa_available(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return true;
        case Isa::avx2:
#if defined(DGE_HAVE_AVX2_TU)
            return __builtin_cpu_supports("avx2");
#else
            return false;
#endif
        case Isa::neon:
#if defined(__aarch64__) || defined(__ARM_NEON)
            return true;
#else
            return false;
#endif
    }
    return false;
}

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
        case Isa::neon: return "neon";
    }
    return "unknown";
}

const Kernels& kernels_for(Isa isa) {
    if (!isa_available(isa)) {
        throw std::runtime_error("instruction set not available: " + std::string(isa_name(isa)));
    }
    switch (isa) {
        case Isa::scalar:
            return detail::scalar_kernels;
        case Isa::avx2:
#if defined(DGE_HAVE_AVX2_TU)
            return detail::avx2_kernels;
#else
            break;
#endif
        case Isa::neon:
#if defined(__aarch64__) || defined(__ARM_NEON)
            return detail::neon_kernels;
#else
            break;
#endif
    }
    throw std::runtime_error("no kernel table for instruction set");
}

const Kernels& kernels() { return *active_table().load(std::memory_order_acquire); }

Isa active_isa() { return kernels().isa; }

void set_active_isa(Isa isa) { active_table().store(&kernels_for(isa), std::memory_order_release); }

}  // namespace dge::simd
