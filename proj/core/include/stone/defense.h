#ifndef STONE_DEFENSE_H_
#define STONE_DEFENSE_H_

#include <vector>

#include "stone/geometry.h"

namespace stone {

// Statistical Outlier Removal parameters: top_n nearest neighbors define a
// point's mean neighbor distance; the del_n points with the largest mean are
// deleted.
struct SorParams {
  int top_n = 15;
  int del_n = 8;
};

// Mean Euclidean distance from each point to its top_n nearest neighbors,
// excluding the point itself.
std::vector<double> knn_mean_distances(const PointCloud& cloud, int top_n);

// Indices removed by sor_filter, in removal-rank order (largest mean
// first; equal means remove the higher index first).
std::vector<std::size_t> sor_outlier_indices(const PointCloud& cloud,
                                             const SorParams& params);

// Requires K > max(top_n, del_n). Survivor order is preserved.
PointCloud sor_filter(const PointCloud& cloud, const SorParams& params);

// Applies sor_filter to every sample; labels are unchanged.
Dataset sor_filter_dataset(const Dataset& dataset, const SorParams& params);

}  // namespace stone

#endif  // STONE_DEFENSE_H_
