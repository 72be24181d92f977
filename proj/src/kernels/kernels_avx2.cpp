// Compiled with -mavx2 -mfma (see CMakeLists). Only reached at runtime when
// cpuid reports both features.

#include "kernels_internal.hpp"

#if defined(DTML_HAVE_AVX2_TU)

#include <immintrin.h>

#include <algorithm>
#include <cstddef>
#include <vector>

namespace dtml::kernels {
namespace avx2_impl {

#include "rowops_avx2.inl"
#include "kernels_body.inl"

}  // namespace avx2_impl

const Ops<float>& avx2_ops_float() {
    static const Ops<float> t = avx2_impl::make_ops<float>();
    return t;
}

const Ops<double>& avx2_ops_double() {
    static const Ops<double> t = avx2_impl::make_ops<double>();
    return t;
}

}  // namespace dtml::kernels

#endif
