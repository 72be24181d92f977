#pragma once

#include <utility>
#include <vector>

#include "dtml/grid.hpp"

namespace dtml::metrics {

struct MetricsReport {
    double dice = 0.0;
    double jaccard = 0.0;
    double asd = 0.0;   // physical units (voxels when spacing is 1,1,1)
    double hd95 = 0.0;
};

// Region overlap. Both-empty pairs score 1; empty-vs-nonempty scores 0.
double dice(const Mask& pred, const Mask& gt);
double jaccard(const Mask& pred, const Mask& gt);

// Directed boundary-to-boundary distances: first list holds, for every
// boundary voxel of pred, the Euclidean distance to the nearest boundary
// voxel of gt; second list is the opposite direction.
std::pair<std::vector<double>, std::vector<double>> surface_distances(const Mask& pred, const Mask& gt);

// Mean of the pooled symmetric surface-distance list.
double asd(const Mask& pred, const Mask& gt);

// 95th percentile (linear interpolation between closest ranks) of the pooled
// symmetric surface-distance list.
double hd95(const Mask& pred, const Mask& gt);

// p-th quantile, p in [0,1], linear interpolation between order statistics.
double percentile(std::vector<double> values, double p);

MetricsReport evaluate(const Mask& pred, const Mask& gt);

}  // namespace dtml::metrics
