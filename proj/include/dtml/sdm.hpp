#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "dtml/grid.hpp"

namespace dtml::sdm {

// Steepness of the distance-to-probability transform. Larger k pushes the
// soft mask toward the hard indicator.
struct TransformConfig {
    double k = 1500.0;
};

// Foreground voxels with at least one 6-connected background neighbour,
// as linear indices in storage order. Volume faces do not count as
// background, so cropped objects do not grow a zero-distance shell.
std::vector<std::size_t> extract_boundary(const Mask& mask);

Mask boundary_mask(const Mask& mask);

// Exact squared-Euclidean-free distance field: each voxel's distance (in
// physical units) to the nearest nonzero voxel of `seeds`. Separable
// lower-envelope passes, one per axis, exact for anisotropic spacing.
Grid3<double> distance_from_seeds(const Mask& seeds);

// Signed distance map of a binary mask: magnitude is the exact Euclidean
// distance to the nearest boundary voxel centre, sign negative strictly
// inside, zero on the boundary, positive outside.
SignedDistanceMap compute_sdm(const Mask& mask);

// Rescale into [-1, 1] by the maximum absolute value.
SignedDistanceMap normalize_sdm(const SignedDistanceMap& in);

// Smooth inverse transform: sigmoid(-k*z), so negative distances (inside)
// map above 0.5. Saturates without producing exact 0/1 or non-finite values.
template <typename T>
inline T soft_mask_value(T z, T k) {
    const T t = -k * z;
    T q;
    if (t >= T{0}) {
        q = T{1} / (T{1} + std::exp(-t));
    } else {
        const T e = std::exp(t);
        q = e / (T{1} + e);
    }
    const T lo = std::numeric_limits<T>::min();
    const T hi = T{1} - std::numeric_limits<T>::epsilon() / 2;
    return q < lo ? lo : (q > hi ? hi : q);
}

Grid3<double> sdm_to_soft_mask(const SignedDistanceMap& sdm, const TransformConfig& cfg);

}  // namespace dtml::sdm
