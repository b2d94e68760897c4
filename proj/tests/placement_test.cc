#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "stone/placement.h"

namespace stone {
namespace {

std::vector<Vec3> grid27() {
  std::vector<Vec3> out;
  const double lv[3] = {0.05, 0.5, 0.95};
  for (double x : lv)
    for (double y : lv)
      for (double z : lv) out.push_back({x, y, z});
  return out;
}

// Independent reference: plain greedy with a full rescan every step.
double reference_greedy_value(int n) {
  const auto cands = grid27();
  std::vector<Vec3> chosen{{0.95, 0.95, 0.95}};
  while (static_cast<int>(chosen.size()) < n) {
    double best = -1.0;
    Vec3 pick{};
    for (const auto& c : cands) {
      if (std::find(chosen.begin(), chosen.end(), c) != chosen.end()) continue;
      double d = std::numeric_limits<double>::infinity();
      for (const auto& s : chosen) d = std::min(d, distance(c, s));
      if (d > best) {
        best = d;
        pick = c;
      }
    }
    chosen.push_back(pick);
  }
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < chosen.size(); ++i)
    for (std::size_t j = i + 1; j < chosen.size(); ++j)
      m = std::min(m, distance(chosen[i], chosen[j]));
  return m;
}

// Independent reference: best min-distance over every 4-subset.
double reference_best4() {
  const auto c = grid27();
  double best = 0.0;
  const std::size_t n = c.size();
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      for (std::size_t d = b + 1; d < n; ++d)
        for (std::size_t e = d + 1; e < n; ++e) {
          const Vec3 s[4] = {c[a], c[b], c[d], c[e]};
          double m = std::numeric_limits<double>::infinity();
          for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j) m = std::min(m, distance(s[i], s[j]));
          best = std::max(best, m);
        }
  return best;
}

TEST(GridTest, DefaultHas27Candidates) {
  EXPECT_EQ(CandidateGrid{}.candidates().size(), 27u);
  EXPECT_EQ(CandidateGrid{.dims = 2}.candidates().size(), 9u);
}

TEST(MinPairwise, Examples) {
  EXPECT_FALSE(min_pairwise_distance(std::vector<Vec3>{}).has_value());
  EXPECT_FALSE(min_pairwise_distance(std::vector<Vec3>{{0.5, 0.5, 0.5}}).has_value());
  const std::vector<Vec3> pts{{0, 0, 0}, {3, 4, 0}, {0, 0, 2}};
  EXPECT_DOUBLE_EQ(*min_pairwise_distance(pts), 2.0);
}

TEST(GreedySingle, OneTriggerIsSeedPoint) {
  const auto r = greedy_single_placement(1);
  ASSERT_EQ(r.positions.size(), 1u);
  EXPECT_EQ(r.positions[0], (Vec3{0.95, 0.95, 0.95}));
  EXPECT_FALSE(r.achieved_min_dist.has_value());
}

TEST(GreedySingle, TwoTriggersOppositeCorner) {
  const auto r = greedy_single_placement(2);
  ASSERT_EQ(r.positions.size(), 2u);
  EXPECT_EQ(r.positions[1], (Vec3{0.05, 0.05, 0.05}));
  EXPECT_NEAR(*r.achieved_min_dist, 0.9 * std::sqrt(3.0), 1e-12);
  EXPECT_NEAR(*r.achieved_min_dist, 1.5588, 1e-4);
}

TEST(GreedySingle, FourTriggerValue) {
  const auto r = greedy_single_placement(4);
  ASSERT_EQ(r.positions.size(), 4u);
  const double published = std::sqrt(0.81 + 0.2025);
  EXPECT_NEAR(*r.achieved_min_dist, published, 1e-12);
  EXPECT_NEAR(*r.achieved_min_dist, reference_greedy_value(4), 1e-12);
  EXPECT_NEAR(*r.achieved_min_dist, 1.0062, 1e-4);
}

TEST(GreedySingle, MatchesReferenceAcrossN) {
  for (int n = 2; n <= 10; ++n) {
    EXPECT_NEAR(*greedy_single_placement(n).achieved_min_dist, reference_greedy_value(n),
                1e-12)
        << "n=" << n;
  }
}

TEST(GreedySingle, CustomOrderChangesTieBreak) {
  CandidateGrid g;
  g.ordered = grid27();
  std::reverse(g.ordered.begin(), g.ordered.end());
  const auto a = greedy_single_placement(4);
  const auto b = greedy_single_placement(4, g);
  EXPECT_NEAR(*a.achieved_min_dist, *b.achieved_min_dist, 1e-12);
  EXPECT_NE(a.positions, b.positions);
}

TEST(GreedySingle, RejectsBadN) {
  EXPECT_THROW(greedy_single_placement(0), std::invalid_argument);
  EXPECT_THROW(greedy_single_placement(28), std::invalid_argument);
}

TEST(GreedyDual, AnchorsAreFourCorners) {
  const std::vector<double> zs{0.05, 0.5, 0.95};
  const auto r = greedy_dual_placement(4, CandidateGrid{.dims = 2}, zs, 3);
  std::set<std::pair<double, double>> got;
  for (const auto& p : r.positions) got.insert({p[0], p[1]});
  const std::set<std::pair<double, double>> want{
      {0.95, 0.95}, {0.05, 0.05}, {0.05, 0.95}, {0.95, 0.05}};
  EXPECT_EQ(got, want);
  ASSERT_EQ(r.pairs.size(), 4u);
  for (std::size_t i = 0; i < r.pairs.size(); ++i) {
    const auto& [c1, c2] = r.pairs[i];
    EXPECT_EQ(c1[0], r.positions[i][0]);
    EXPECT_EQ(c1[1], r.positions[i][1]);
    EXPECT_EQ(c2[0], c1[0]);
    EXPECT_EQ(c2[1], c1[1]);
    EXPECT_NE(c1[2], c2[2]);
  }
}

TEST(GreedyDual, ExplicitZPairsAreUsedVerbatim) {
  const std::vector<std::pair<double, double>> zp{{0.05, 0.95}, {0.5, 0.05}};
  const auto r = greedy_dual_placement(2, CandidateGrid{.dims = 2}, {}, 0, zp);
  ASSERT_EQ(r.pairs.size(), 2u);
  EXPECT_EQ(r.pairs[0][0], (Vec3{0.95, 0.95, 0.05}));
  EXPECT_EQ(r.pairs[0][1], (Vec3{0.95, 0.95, 0.95}));
  EXPECT_EQ(r.pairs[1][0], (Vec3{0.05, 0.05, 0.5}));
  EXPECT_EQ(r.pairs[1][1], (Vec3{0.05, 0.05, 0.05}));
}

TEST(GreedyDual, RejectsEqualZ) {
  const std::vector<std::pair<double, double>> zp{{0.5, 0.5}};
  EXPECT_THROW(greedy_dual_placement(1, CandidateGrid{.dims = 2}, {}, 0, zp),
               std::invalid_argument);
}

TEST(ToSpecs, OneSpecPerPosition) {
  const auto r = greedy_single_placement(3);
  const std::vector<int> targets{4, 1, 7};
  const auto specs = r.to_specs(targets, 0.05, 3);
  ASSERT_EQ(specs.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(specs[i].target, targets[i]);
    EXPECT_EQ(specs[i].centers[0], r.positions[i]);
    EXPECT_EQ(specs[i].points_per_sphere, 3);
  }
}

TEST(Oracle, TwoTriggersMatchesDiagonal) {
  const auto r = maximin_oracle(2);
  EXPECT_NEAR(*r.achieved_min_dist, 1.5588, 1e-4);
}

TEST(Oracle, SingleTriggerHasNoDistance) {
  EXPECT_FALSE(maximin_oracle(1).achieved_min_dist.has_value());
}

TEST(Oracle, FourTriggersAgreesWithBruteForce) {
  const auto r = maximin_oracle(4);
  EXPECT_NEAR(*r.achieved_min_dist, reference_best4(), 1e-12);
  EXPECT_GE(*r.achieved_min_dist + 1e-12, *greedy_single_placement(4).achieved_min_dist);
}

TEST(Oracle, BudgetExceededThrows) {
  EXPECT_THROW(maximin_oracle(10, CandidateGrid{}, 1000), std::invalid_argument);
}

}  // namespace
}  // namespace stone
