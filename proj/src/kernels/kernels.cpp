#include "dtml/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

#include "kernels_internal.hpp"

namespace dtml::kernels {

namespace {

Backend detect() {
    if (const char* env = std::getenv("DTML_KERNEL_BACKEND")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
        if (std::strcmp(env, "avx2") == 0) return Backend::avx2;
        if (std::strcmp(env, "neon") == 0) return Backend::neon;
        // "auto" or anything else falls through to detection
    }
#if defined(DTML_HAVE_AVX2_TU) && (defined(__GNUC__) || defined(__clang__))
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
        return Backend::avx2;
#endif
#if defined(DTML_HAVE_NEON_TU)
    return Backend::neon;
#endif
    return Backend::scalar;
}

std::atomic<Backend> g_backend{detect()};

}  // namespace

const char* backend_name(Backend b) {
    switch (b) {
        case Backend::scalar: return "scalar";
        case Backend::avx2: return "avx2";
        case Backend::neon: return "neon";
    }
    return "?";
}

bool backend_supported(Backend b) {
    switch (b) {
        case Backend::scalar:
            return true;
        case Backend::avx2:
#if defined(DTML_HAVE_AVX2_TU) && (defined(__GNUC__) || defined(__clang__))
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
        case Backend::neon:
#if defined(DTML_HAVE_NEON_TU)
            return true;
#else
            return false;
#endif
    }
    return false;
}

Backend active_backend() { return g_backend.load(std::memory_order_relaxed); }

void force_backend(Backend b) {
    if (!backend_supported(b))
        throw std::runtime_error(std::string("kernel backend not supported on this host: ") + backend_name(b));
    g_backend.store(b, std::memory_order_relaxed);
}

void reset_backend() { g_backend.store(detect(), std::memory_order_relaxed); }

template <>
const Ops<float>& ops_for<float>(Backend b) {
    switch (b) {
#if defined(DTML_HAVE_AVX2_TU)
        case Backend::avx2: return avx2_ops_float();
#endif
#if defined(DTML_HAVE_NEON_TU)
        case Backend::neon: return neon_ops_float();
#endif
        default: return scalar_ops_float();
    }
}

template <>
const Ops<double>& ops_for<double>(Backend b) {
    switch (b) {
#if defined(DTML_HAVE_AVX2_TU)
        case Backend::avx2: return avx2_ops_double();
#endif
#if defined(DTML_HAVE_NEON_TU)
        case Backend::neon: return neon_ops_double();
#endif
        default: return scalar_ops_double();
    }
}

template <>
const Ops<float>& ops<float>() { return ops_for<float>(active_backend()); }

template <>
const Ops<double>& ops<double>() { return ops_for<double>(active_backend()); }

}  // namespace dtml::kernels
