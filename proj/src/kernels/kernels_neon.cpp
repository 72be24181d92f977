#include "kernels_internal.hpp"

#if defined(DTML_HAVE_NEON_TU)

#include <arm_neon.h>

#include <algorithm>
#include <cstddef>
#include <vector>

namespace dtml::kernels {
namespace neon_impl {

#include "rowops_neon.inl"
#include "kernels_body.inl"

}  // namespace neon_impl

const Ops<float>& neon_ops_float() {
    static const Ops<float> t = neon_impl::make_ops<float>();
    return t;
}

const Ops<double>& neon_ops_double() {
    static const Ops<double> t = neon_impl::make_ops<double>();
    return t;
}

}  // namespace dtml::kernels

#endif
