#include "dtml/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "dtml/sdm.hpp"

namespace dtml::metrics {

namespace {

void check_pair(const Mask& pred, const Mask& gt, const char* what) {
    require_same_shape(pred, gt, what);
    if (!(pred.spacing == gt.spacing))
        throw ShapeMismatch(std::string(what) + ": spacings differ");
    require_mask_values(pred, what);
    require_mask_values(gt, what);
}

struct OverlapCounts {
    std::size_t p = 0, g = 0, both = 0;
};

OverlapCounts overlap(const Mask& pred, const Mask& gt) {
    OverlapCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        c.p += pred.v[i];
        c.g += gt.v[i];
        c.both += static_cast<std::size_t>(pred.v[i] & gt.v[i]);
    }
    return c;
}

std::vector<double> directed_distances(const std::vector<std::size_t>& from_boundary,
                                       const Grid3<double>& dist_to_other) {
    std::vector<double> out;
    out.reserve(from_boundary.size());
    for (std::size_t i : from_boundary) out.push_back(dist_to_other.v[i]);
    return out;
}

}  // namespace

double dice(const Mask& pred, const Mask& gt) {
    check_pair(pred, gt, "dice");
    const auto c = overlap(pred, gt);
    if (c.p + c.g == 0) return 1.0;
    return 2.0 * static_cast<double>(c.both) / static_cast<double>(c.p + c.g);
}

double jaccard(const Mask& pred, const Mask& gt) {
    check_pair(pred, gt, "jaccard");
    const auto c = overlap(pred, gt);
    const std::size_t uni = c.p + c.g - c.both;
    if (uni == 0) return 1.0;
    return static_cast<double>(c.both) / static_cast<double>(uni);
}

std::pair<std::vector<double>, std::vector<double>> surface_distances(const Mask& pred, const Mask& gt) {
    check_pair(pred, gt, "surface_distances");
    const auto bp = sdm::extract_boundary(pred);
    const auto bg = sdm::extract_boundary(gt);

    Mask seeds_g(gt.h, gt.w, gt.d, 0, gt.spacing);
    for (std::size_t i : bg) seeds_g.v[i] = 1;
    Mask seeds_p(pred.h, pred.w, pred.d, 0, pred.spacing);
    for (std::size_t i : bp) seeds_p.v[i] = 1;

    const auto dist_to_g = sdm::distance_from_seeds(seeds_g);
    const auto dist_to_p = sdm::distance_from_seeds(seeds_p);

    return {directed_distances(bp, dist_to_g), directed_distances(bg, dist_to_p)};
}

double asd(const Mask& pred, const Mask& gt) {
    const auto [pg, gp] = surface_distances(pred, gt);
    double s = 0.0;
    for (double x : pg) s += x;
    for (double x : gp) s += x;
    return s / static_cast<double>(pg.size() + gp.size());
}

double percentile(std::vector<double> values, double p) {
    if (values.empty())
        throw Error("percentile: empty list");
    std::sort(values.begin(), values.end());
    const double rank = p * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(rank);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

double hd95(const Mask& pred, const Mask& gt) {
    auto [pg, gp] = surface_distances(pred, gt);
    pg.insert(pg.end(), gp.begin(), gp.end());
    return percentile(std::move(pg), 0.95);
}

MetricsReport evaluate(const Mask& pred, const Mask& gt) {
    MetricsReport r;
    r.dice = dice(pred, gt);
    r.jaccard = jaccard(pred, gt);
    auto [pg, gp] = surface_distances(pred, gt);
    double s = 0.0;
    for (double x : pg) s += x;
    for (double x : gp) s += x;
    r.asd = s / static_cast<double>(pg.size() + gp.size());
    pg.insert(pg.end(), gp.begin(), gp.end());
    r.hd95 = percentile(std::move(pg), 0.95);
    return r;
}

}  // namespace dtml::metrics
