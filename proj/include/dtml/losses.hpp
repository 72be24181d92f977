#pragma once

#include <cstdint>

#include "dtml/grid.hpp"
#include "dtml/sdm.hpp"

namespace dtml::losses {

// Consistency-weight schedule: max_weight * exp(-5 * (1 - t/t_max)^p),
// clamped at max_weight for t >= t_max. p = 1 by default; p = 2 via
// exponent_squared (the convention of earlier ramp-up schedules).
struct RampUpSchedule {
    double max_weight = 0.1;
    std::int64_t t_max = 2000;
    bool exponent_squared = false;
};

double lambda_con(std::int64_t t, const RampUpSchedule& s);

// Per-iteration loss record.
struct LossBundle {
    double l_seg = 0.0;
    double l_mask = 0.0;
    double l_dis = 0.0;
    double l_con = 0.0;
    double lambda_con = 0.0;
};

// Soft Dice loss 1 - (2*sum(p*g)+s)/(sum(p)+sum(g)+s) over the whole grid.
template <typename T>
T soft_dice_loss(const Grid3<T>& pred, const Mask& gt);

// Voxel-mean binary cross-entropy with probabilities clamped to
// [1e-7, 1-1e-7].
template <typename T>
T bce_loss(const Grid3<T>& pred, const Mask& gt);

// 0.5 * soft Dice + 0.5 * BCE.
template <typename T>
T loss_seg(const Grid3<T>& pred, const Mask& gt);

// Accumulates scale * d(loss_seg)/d(pred) into grad and returns the value.
template <typename T>
T loss_seg_vjp(const Grid3<T>& pred, const Mask& gt, T scale, Grid3<T>& grad);

// Voxel-mean squared error between two normalized signed distance maps
// given as plain grids; the SignedDistanceMap overload checks the flags.
template <typename T>
T loss_dis(const Grid3<T>& pred, const Grid3<T>& gt);

double loss_dis(const SignedDistanceMap& pred, const SignedDistanceMap& gt);

template <typename T>
T loss_dis_vjp(const Grid3<T>& pred, const Grid3<T>& gt, T scale, Grid3<T>& grad);

// Soft Dice between the transformed prediction sigmoid(-k*z) and the mask.
// Differentiable through the transform; vjp accumulates w.r.t. z.
template <typename T>
T loss_mask(const Grid3<T>& pred_sdm, const Mask& gt, T k);

double loss_mask(const SignedDistanceMap& pred, const Mask& gt, const sdm::TransformConfig& cfg);

template <typename T>
T loss_mask_vjp(const Grid3<T>& pred_sdm, const Mask& gt, T k, T scale, Grid3<T>& grad);

// Voxel-mean squared difference between the probability map and the
// transformed distance prediction. The consistency weight is NOT applied
// here; the trainer applies it exactly once.
template <typename T>
T loss_consistency(const Grid3<T>& pred_seg, const Grid3<T>& pred_sdm, T k);

double loss_consistency(const Grid3<double>& pred_seg, const SignedDistanceMap& pred_sdm,
                        const sdm::TransformConfig& cfg);

// Gradients of the consistency loss, each side holding the other constant.
template <typename T>
T loss_consistency_vjp_seg(const Grid3<T>& pred_seg, const Grid3<T>& pred_sdm, T k, T scale,
                           Grid3<T>& grad_seg);

template <typename T>
T loss_consistency_vjp_sdm(const Grid3<T>& pred_seg, const Grid3<T>& pred_sdm, T k, T scale,
                           Grid3<T>& grad_sdm);

}  // namespace dtml::losses
