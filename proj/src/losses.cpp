#include "dtml/losses.hpp"

#include <algorithm>
#include <cmath>

namespace dtml::losses {

namespace {

constexpr double kDiceSmooth = 1e-5;
constexpr double kBceEps = 1e-7;

template <typename T>
void check_pred_mask(const Grid3<T>& pred, const Mask& gt, const char* what) {
    require_same_shape(pred, gt, what);
    require_mask_values(gt, what);
}

template <typename T>
struct DiceTerms {
    T num, den;  // loss = 1 - num/den
};

template <typename T, typename F>
DiceTerms<T> dice_terms(const F& pred_at, const Mask& gt, std::size_t n) {
    T inter{}, psum{}, gsum{};
    for (std::size_t i = 0; i < n; ++i) {
        const T p = pred_at(i);
        const T g = static_cast<T>(gt.v[i]);
        inter += p * g;
        psum += p;
        gsum += g;
    }
    const T s = static_cast<T>(kDiceSmooth);
    return {T{2} * inter + s, psum + gsum + s};
}

}  // namespace

double lambda_con(std::int64_t t, const RampUpSchedule& s) {
    if (s.t_max <= 0)
        throw InvalidConfig("ramp-up schedule needs t_max > 0");
    if (s.max_weight < 0.0)
        throw InvalidConfig("ramp-up schedule needs max_weight >= 0");
    if (t < 0)
        throw InvalidConfig("lambda_con: negative iteration");
    const double frac = std::min<double>(static_cast<double>(t), static_cast<double>(s.t_max)) /
                        static_cast<double>(s.t_max);
    const double base = 1.0 - frac;
    const double e = s.exponent_squared ? base * base : base;
    return s.max_weight * std::exp(-5.0 * e);
}

template <typename T>
T soft_dice_loss(const Grid3<T>& pred, const Mask& gt) {
    check_pred_mask(pred, gt, "soft_dice_loss");
    const auto d = dice_terms<T>([&](std::size_t i) { return pred.v[i]; }, gt, pred.size());
    return T{1} - d.num / d.den;
}

template <typename T>
T bce_loss(const Grid3<T>& pred, const Mask& gt) {
    check_pred_mask(pred, gt, "bce_loss");
    const T lo = static_cast<T>(kBceEps), hi = T{1} - static_cast<T>(kBceEps);
    T acc{};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const T p = std::clamp(pred.v[i], lo, hi);
        acc += gt.v[i] ? -std::log(p) : -std::log(T{1} - p);
    }
    return acc / static_cast<T>(pred.size());
}

template <typename T>
T loss_seg(const Grid3<T>& pred, const Mask& gt) {
    return T{0.5} * soft_dice_loss(pred, gt) + T{0.5} * bce_loss(pred, gt);
}

template <typename T>
T loss_seg_vjp(const Grid3<T>& pred, const Mask& gt, T scale, Grid3<T>& grad) {
    check_pred_mask(pred, gt, "loss_seg");
    require_same_shape(pred, grad, "loss_seg grad");
    const std::size_t n = pred.size();
    const auto d = dice_terms<T>([&](std::size_t i) { return pred.v[i]; }, gt, n);
    const T lo = static_cast<T>(kBceEps), hi = T{1} - static_cast<T>(kBceEps);
    const T half = T{0.5};
    const T inv_n = T{1} / static_cast<T>(n);
    T bce{};
    for (std::size_t i = 0; i < n; ++i) {
        const T g = static_cast<T>(gt.v[i]);
        // dice part: d(1 - num/den)/dp = -(2g*den - num)/den^2
        const T ddice = -(T{2} * g * d.den - d.num) / (d.den * d.den);
        const T p = pred.v[i];
        T dbce{};
        if (p > lo && p < hi) {
            dbce = (gt.v[i] ? -T{1} / p : T{1} / (T{1} - p)) * inv_n;
        }
        const T pc = std::clamp(p, lo, hi);
        bce += gt.v[i] ? -std::log(pc) : -std::log(T{1} - pc);
        grad.v[i] += scale * (half * ddice + half * dbce);
    }
    return half * (T{1} - d.num / d.den) + half * bce * inv_n;
}

template <typename T>
T loss_dis(const Grid3<T>& pred, const Grid3<T>& gt) {
    require_same_shape(pred, gt, "loss_dis");
    T acc{};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const T d = pred.v[i] - gt.v[i];
        acc += d * d;
    }
    return acc / static_cast<T>(pred.size());
}

double loss_dis(const SignedDistanceMap& pred, const SignedDistanceMap& gt) {
    if (!pred.normalized || !gt.normalized)
        throw NormalizationMismatch("loss_dis: both maps must be normalized");
    return loss_dis(pred.values, gt.values);
}

template <typename T>
T loss_dis_vjp(const Grid3<T>& pred, const Grid3<T>& gt, T scale, Grid3<T>& grad) {
    require_same_shape(pred, gt, "loss_dis");
    require_same_shape(pred, grad, "loss_dis grad");
    const T inv_n = T{1} / static_cast<T>(pred.size());
    T acc{};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const T d = pred.v[i] - gt.v[i];
        acc += d * d;
        grad.v[i] += scale * T{2} * d * inv_n;
    }
    return acc * inv_n;
}

template <typename T>
T loss_mask(const Grid3<T>& pred_sdm, const Mask& gt, T k) {
    check_pred_mask(pred_sdm, gt, "loss_mask");
    const auto d = dice_terms<T>(
        [&](std::size_t i) { return sdm::soft_mask_value(pred_sdm.v[i], k); }, gt, pred_sdm.size());
    return T{1} - d.num / d.den;
}

double loss_mask(const SignedDistanceMap& pred, const Mask& gt, const sdm::TransformConfig& cfg) {
    if (!pred.normalized)
        throw NormalizationMismatch("loss_mask: prediction must be normalized");
    return loss_mask(pred.values, gt, cfg.k);
}

template <typename T>
T loss_mask_vjp(const Grid3<T>& pred_sdm, const Mask& gt, T k, T scale, Grid3<T>& grad) {
    check_pred_mask(pred_sdm, gt, "loss_mask");
    require_same_shape(pred_sdm, grad, "loss_mask grad");
    const std::size_t n = pred_sdm.size();
    const auto d = dice_terms<T>(
        [&](std::size_t i) { return sdm::soft_mask_value(pred_sdm.v[i], k); }, gt, n);
    for (std::size_t i = 0; i < n; ++i) {
        const T q = sdm::soft_mask_value(pred_sdm.v[i], k);
        const T g = static_cast<T>(gt.v[i]);
        const T ddice = -(T{2} * g * d.den - d.num) / (d.den * d.den);
        const T dq_dz = -k * q * (T{1} - q);
        grad.v[i] += scale * ddice * dq_dz;
    }
    return T{1} - d.num / d.den;
}

template <typename T>
T loss_consistency(const Grid3<T>& pred_seg, const Grid3<T>& pred_sdm, T k) {
    require_same_shape(pred_seg, pred_sdm, "loss_consistency");
    T acc{};
    for (std::size_t i = 0; i < pred_seg.size(); ++i) {
        const T d = pred_seg.v[i] - sdm::soft_mask_value(pred_sdm.v[i], k);
        acc += d * d;
    }
    return acc / static_cast<T>(pred_seg.size());
}

double loss_consistency(const Grid3<double>& pred_seg, const SignedDistanceMap& pred_sdm,
                        const sdm::TransformConfig& cfg) {
    if (!pred_sdm.normalized)
        throw NormalizationMismatch("loss_consistency: distance prediction must be normalized");
    return loss_consistency(pred_seg, pred_sdm.values, cfg.k);
}

template <typename T>
T loss_consistency_vjp_seg(const Grid3<T>& pred_seg, const Grid3<T>& pred_sdm, T k, T scale,
                           Grid3<T>& grad_seg) {
    require_same_shape(pred_seg, pred_sdm, "loss_consistency");
    require_same_shape(pred_seg, grad_seg, "loss_consistency grad");
    const T inv_n = T{1} / static_cast<T>(pred_seg.size());
    T acc{};
    for (std::size_t i = 0; i < pred_seg.size(); ++i) {
        const T d = pred_seg.v[i] - sdm::soft_mask_value(pred_sdm.v[i], k);
        acc += d * d;
        grad_seg.v[i] += scale * T{2} * d * inv_n;
    }
    return acc * inv_n;
}

template <typename T>
T loss_consistency_vjp_sdm(const Grid3<T>& pred_seg, const Grid3<T>& pred_sdm, T k, T scale,
                           Grid3<T>& grad_sdm) {
    require_same_shape(pred_seg, pred_sdm, "loss_consistency");
    require_same_shape(pred_sdm, grad_sdm, "loss_consistency grad");
    const T inv_n = T{1} / static_cast<T>(pred_seg.size());
    T acc{};
    for (std::size_t i = 0; i < pred_seg.size(); ++i) {
        const T q = sdm::soft_mask_value(pred_sdm.v[i], k);
        const T d = pred_seg.v[i] - q;
        acc += d * d;
        // d/dz of (p - q)^2 with q = sigmoid(-k z)
        grad_sdm.v[i] += scale * T{2} * d * k * q * (T{1} - q) * inv_n;
    }
    return acc * inv_n;
}

#define DTML_INSTANTIATE_LOSSES(T)                                                            \
    template T soft_dice_loss<T>(const Grid3<T>&, const Mask&);                               \
    template T bce_loss<T>(const Grid3<T>&, const Mask&);                                     \
    template T loss_seg<T>(const Grid3<T>&, const Mask&);                                     \
    template T loss_seg_vjp<T>(const Grid3<T>&, const Mask&, T, Grid3<T>&);                   \
    template T loss_dis<T>(const Grid3<T>&, const Grid3<T>&);                                 \
    template T loss_dis_vjp<T>(const Grid3<T>&, const Grid3<T>&, T, Grid3<T>&);               \
    template T loss_mask<T>(const Grid3<T>&, const Mask&, T);                                 \
    template T loss_mask_vjp<T>(const Grid3<T>&, const Mask&, T, T, Grid3<T>&);               \
    template T loss_consistency<T>(const Grid3<T>&, const Grid3<T>&, T);                      \
    template T loss_consistency_vjp_seg<T>(const Grid3<T>&, const Grid3<T>&, T, T, Grid3<T>&); \
    template T loss_consistency_vjp_sdm<T>(const Grid3<T>&, const Grid3<T>&, T, T, Grid3<T>&)

DTML_INSTANTIATE_LOSSES(float);
DTML_INSTANTIATE_LOSSES(double);

}  // namespace dtml::losses
