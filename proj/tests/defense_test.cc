#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>

#include "stone/defense.h"
#include "stone/experiments.h"
#include "stone/rng.h"

namespace stone {
namespace {

PointCloud random_cloud(int k, std::uint64_t seed) {
  Rng rng(seed);
  PointCloud c;
  for (int i = 0; i < k; ++i) c.points.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
  return c;
}

// Reference filter: full distance matrix, sort each row, stable rank.
PointCloud reference_sor(const PointCloud& cloud, int top_n, int del_n) {
  const std::size_t k = cloud.size();
  std::vector<double> mean(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<double> d;
    for (std::size_t j = 0; j < k; ++j)
      if (j != i) d.push_back(distance(cloud.points[i], cloud.points[j]));
    std::sort(d.begin(), d.end());
    mean[i] = std::accumulate(d.begin(), d.begin() + top_n, 0.0) / top_n;
  }
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return mean[a] != mean[b] ? mean[a] > mean[b] : a > b;
  });
  std::vector<char> drop(k, 0);
  for (int r = 0; r < del_n; ++r) drop[idx[r]] = 1;
  PointCloud out;
  for (std::size_t i = 0; i < k; ++i)
    if (!drop[i]) out.points.push_back(cloud.points[i]);
  return out;
}

TEST(Knn, LineExample) {
  const PointCloud c{{{0, 0, 0}, {1, 0, 0}, {3, 0, 0}}};
  const auto m = knn_mean_distances(c, 1);
  EXPECT_DOUBLE_EQ(m[0], 1.0);
  EXPECT_DOUBLE_EQ(m[1], 1.0);
  EXPECT_DOUBLE_EQ(m[2], 2.0);
  const auto m2 = knn_mean_distances(c, 2);
  EXPECT_DOUBLE_EQ(m2[2], 2.5);
}

TEST(Sor, ZeroDeleteIsIdentity) {
  const auto c = random_cloud(64, 3);
  EXPECT_EQ(sor_filter(c, {.top_n = 5, .del_n = 0}), c);
}

TEST(Sor, RemovesObviousOutlier) {
  PointCloud c;
  for (int i = 0; i < 10; ++i) c.points.push_back({0.1 * i, 0, 0});
  c.points.insert(c.points.begin() + 4, Vec3{5, 5, 5});
  const auto out = sor_filter(c, {.top_n = 2, .del_n = 1});
  ASSERT_EQ(out.size(), 10u);
  for (const auto& p : out.points) EXPECT_EQ(p[1], 0.0);
}

TEST(Sor, TiesRemoveHigherIndexFirst) {
  const PointCloud c{{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}}};
  const auto idx = sor_outlier_indices(c, {.top_n = 2, .del_n = 2});
  EXPECT_EQ(idx, (std::vector<std::size_t>{3, 2}));
  const auto out = sor_filter(c, {.top_n = 2, .del_n = 1});
  EXPECT_EQ(out.points, (std::vector<Vec3>{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}));
}

TEST(Sor, SizeAfterFilter) {
  const auto c = random_cloud(200, 9);
  for (int del : {1, 8, 50}) EXPECT_EQ(sor_filter(c, {.top_n = 15, .del_n = del}).size(), 200u - del);
}

TEST(Sor, MatchesReference) {
  for (int k : {20, 100, 512}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto c = random_cloud(k, seed * 31 + k);
      const SorParams p{.top_n = std::min(15, k - 2), .del_n = k / 10};
      EXPECT_EQ(sor_filter(c, p), reference_sor(c, p.top_n, p.del_n)) << "k=" << k;
    }
  }
}

TEST(Sor, PermutationCovariant) {
  const auto c = random_cloud(128, 4);
  const SorParams p{.top_n = 8, .del_n = 12};
  const auto base = sor_filter(c, p);
  std::vector<Vec3> expected = base.points;
  std::sort(expected.begin(), expected.end());
  Rng rng(99);
  for (int trial = 0; trial < 5; ++trial) {
    PointCloud perm = c;
    rng.shuffle(perm.points);
    auto got = sor_filter(perm, p).points;
    std::sort(got.begin(), got.end());
    EXPECT_EQ(got, expected);
  }
}

TEST(Sor, RejectsSmallClouds) {
  const auto c = random_cloud(10, 1);
  EXPECT_THROW(sor_filter(c, {.top_n = 10, .del_n = 1}), std::invalid_argument);
  EXPECT_THROW(sor_filter(c, {.top_n = 3, .del_n = 10}), std::invalid_argument);
  EXPECT_THROW(sor_filter(c, {.top_n = 0, .del_n = 1}), std::invalid_argument);
}

TEST(Sor, DatasetKeepsLabels) {
  Dataset d;
  d.num_classes = 3;
  for (int i = 0; i < 3; ++i) d.samples.push_back({random_cloud(40, i), i});
  const auto out = sor_filter_dataset(d, {.top_n = 5, .del_n = 4});
  ASSERT_EQ(out.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(out.samples[i].label, i);
    EXPECT_EQ(out.samples[i].cloud.size(), 36u);
  }
}

TEST(OutlierGeometryTest, IsolatedSingleSphereIsRemoved) {
  const auto g = make_outlier_geometry(100, 0.1, 0.8, TriggerKind::kSingle, 10, 0.05, 1);
  EXPECT_EQ(g.cloud.size(), 110u);
  EXPECT_EQ(g.trigger_indices.size(), 10u);
  EXPECT_DOUBLE_EQ(sor_survival(g, {.top_n = 5, .del_n = 10}), 0.0);
}

}  // namespace
}  // namespace stone
