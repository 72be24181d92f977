#include <algorithm>
#include <cstddef>
#include <vector>

#include "kernels_internal.hpp"

namespace dtml::kernels {
namespace scalar_impl {

#include "rowops_scalar.inl"
#include "kernels_body.inl"

}  // namespace scalar_impl

const Ops<float>& scalar_ops_float() {
    static const Ops<float> t = scalar_impl::make_ops<float>();
    return t;
}

const Ops<double>& scalar_ops_double() {
    static const Ops<double> t = scalar_impl::make_ops<double>();
    return t;
}

}  // namespace dtml::kernels
