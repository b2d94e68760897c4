#include "stone/defense.h"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace stone {
namespace {

void check_params(const PointCloud& cloud, const SorParams& params) {
  if (params.top_n < 1) throw std::invalid_argument("SOR: top_n must be >= 1");
  if (params.del_n < 0) throw std::invalid_argument("SOR: del_n must be >= 0");
  const auto k = cloud.size();
  if (k <= static_cast<std::size_t>(std::max(params.top_n, params.del_n))) {
    throw std::invalid_argument("SOR: cloud of " + std::to_string(k) +
                                " points too small for top_n=" +
                                std::to_string(params.top_n) +
                                ", del_n=" + std::to_string(params.del_n));
  }
}

}  // namespace

std::vector<double> knn_mean_distances(const PointCloud& cloud, int top_n) {
  const std::size_t k = cloud.size();
  if (top_n < 1 || static_cast<std::size_t>(top_n) >= k) {
    throw std::invalid_argument("knn: need 1 <= top_n < K");
  }
  std::vector<double> means(k);
  std::vector<double> d2(k - 1);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t w = 0;
    for (std::size_t j = 0; j < k; ++j) {
      if (j != i) d2[w++] = squared_distance(cloud.points[i], cloud.points[j]);
    }
    std::nth_element(d2.begin(), d2.begin() + (top_n - 1), d2.end());
    // The top_n smallest now occupy the prefix; sort it so the sum is
    // accumulated in a fixed order.
    std::sort(d2.begin(), d2.begin() + top_n);
    double sum = 0.0;
    for (int n = 0; n < top_n; ++n) sum += std::sqrt(d2[n]);
    means[i] = sum / top_n;
  }
  return means;
}

std::vector<std::size_t> sor_outlier_indices(const PointCloud& cloud,
                                             const SorParams& params) {
  check_params(cloud, params);
  if (params.del_n == 0) return {};
  const auto means = knn_mean_distances(cloud, params.top_n);
  std::vector<std::size_t> order(cloud.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto worse = [&](std::size_t a, std::size_t b) {
    if (means[a] != means[b]) return means[a] > means[b];
    return a > b;
  };
  std::partial_sort(order.begin(), order.begin() + params.del_n, order.end(), worse);
  order.resize(params.del_n);
  return order;
}

PointCloud sor_filter(const PointCloud& cloud, const SorParams& params) {
  const auto outliers = sor_outlier_indices(cloud, params);
  std::vector<char> drop(cloud.size(), 0);
  for (auto i : outliers) drop[i] = 1;
  PointCloud out;
  out.points.reserve(cloud.size() - outliers.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!drop[i]) out.points.push_back(cloud.points[i]);
  }
  return out;
}

Dataset sor_filter_dataset(const Dataset& dataset, const SorParams& params) {
  Dataset out;
  out.num_classes = dataset.num_classes;
  out.samples.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    try {
      out.samples.push_back(
          {sor_filter(dataset.samples[i].cloud, params), dataset.samples[i].label});
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("sample " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace stone
