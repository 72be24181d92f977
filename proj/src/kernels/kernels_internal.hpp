#pragma once

#include "dtml/kernels.hpp"

namespace dtml::kernels {

const Ops<float>& scalar_ops_float();
const Ops<double>& scalar_ops_double();

#if defined(__x86_64__) || defined(_M_X64)
#define DTML_HAVE_AVX2_TU 1
const Ops<float>& avx2_ops_float();
const Ops<double>& avx2_ops_double();
#endif

#if defined(__aarch64__)
#define DTML_HAVE_NEON_TU 1
const Ops<float>& neon_ops_float();
const Ops<double>& neon_ops_double();
#endif

}  // namespace dtml::kernels
