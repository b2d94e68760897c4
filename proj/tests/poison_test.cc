#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "stone/geometry.h"
#include "stone/poison.h"
#include "stone/trigger.h"

namespace stone {
namespace {

Dataset small_dataset(int per_class, int points, double jitter, std::uint64_t seed) {
  SynthDatasetConfig cfg;
  cfg.samples_per_class = per_class;
  cfg.num_points = points;
  cfg.jitter = jitter;
  cfg.seed = seed;
  return synth_dataset(cfg);
}

TEST(Allocate, GlobalBudgetAndSpread) {
  const std::vector<int> targets{0, 1, 2, 3};
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    const auto plan = allocate_targets(9843, 0.01, targets, PoisonMode::kGlobal, seed);
    EXPECT_EQ(plan.assignments.size(), 98u);
    for (int c : plan.per_target_counts()) {
      EXPECT_GE(c, 20);
      EXPECT_LE(c, 30);
    }
  }
}

TEST(Allocate, SamplesAreDistinctAndSorted) {
  const std::vector<int> targets{5, 9};
  const auto plan = allocate_targets(500, 0.1, targets, PoisonMode::kGlobal, 8);
  std::set<int> seen;
  for (std::size_t i = 0; i < plan.assignments.size(); ++i) {
    const auto& a = plan.assignments[i];
    EXPECT_TRUE(seen.insert(a.sample).second);
    EXPECT_GE(a.sample, 0);
    EXPECT_LT(a.sample, 500);
    EXPECT_TRUE(a.target == 5 || a.target == 9);
    if (i > 0) EXPECT_LT(plan.assignments[i - 1].sample, a.sample);
  }
}

TEST(Allocate, PerTargetIsExact) {
  const std::vector<int> targets{0, 3, 6};
  const auto plan = allocate_targets(1000, 0.02, targets, PoisonMode::kPerTarget, 4);
  EXPECT_EQ(plan.per_target_counts(), (std::vector<int>{20, 20, 20}));
  EXPECT_EQ(plan.assignments.size(), 60u);
}

TEST(Allocate, Deterministic) {
  const std::vector<int> targets{1, 2};
  const auto a = allocate_targets(300, 0.05, targets, PoisonMode::kGlobal, 77);
  const auto b = allocate_targets(300, 0.05, targets, PoisonMode::kGlobal, 77);
  const auto c = allocate_targets(300, 0.05, targets, PoisonMode::kGlobal, 78);
  EXPECT_EQ(a.assignments, b.assignments);
  EXPECT_NE(a.assignments, c.assignments);
}

TEST(Allocate, ExcludeOwnClass) {
  std::vector<int> labels(200);
  for (int i = 0; i < 200; ++i) labels[i] = i % 2;
  const std::vector<int> targets{0, 1};
  const auto plan =
      allocate_targets(200, 0.2, targets, PoisonMode::kGlobal, 3, labels, true);
  EXPECT_EQ(plan.assignments.size(), 40u);
  for (const auto& a : plan.assignments) EXPECT_NE(labels[a.sample], a.target);
}

TEST(Allocate, Errors) {
  const std::vector<int> targets{0};
  const std::vector<int> dup{0, 0};
  EXPECT_THROW(allocate_targets(0, 0.1, targets, PoisonMode::kGlobal, 1), std::invalid_argument);
  EXPECT_THROW(allocate_targets(100, 0.0, targets, PoisonMode::kGlobal, 1), std::invalid_argument);
  EXPECT_THROW(allocate_targets(100, 1.0, targets, PoisonMode::kGlobal, 1), std::invalid_argument);
  EXPECT_THROW(allocate_targets(100, 0.1, {}, PoisonMode::kGlobal, 1), std::invalid_argument);
  EXPECT_THROW(allocate_targets(100, 0.1, dup, PoisonMode::kGlobal, 1), std::invalid_argument);
  EXPECT_THROW(allocate_targets(10, 0.01, targets, PoisonMode::kGlobal, 1), std::invalid_argument);
}

TEST(Mode, Names) {
  EXPECT_EQ(parse_poison_mode("global"), PoisonMode::kGlobal);
  EXPECT_EQ(parse_poison_mode("per-target"), PoisonMode::kPerTarget);
  EXPECT_EQ(parse_poison_mode(to_string(PoisonMode::kPerTarget)), PoisonMode::kPerTarget);
  EXPECT_THROW(parse_poison_mode("bogus"), std::invalid_argument);
}

TEST(PlanFile, RoundTrip) {
  const std::vector<int> targets{2, 4, 1};
  const auto plan = allocate_targets(400, 0.05, targets, PoisonMode::kPerTarget, 123);
  const auto path = std::filesystem::temp_directory_path() / "stone_plan_roundtrip.txt";
  save_plan(plan, path);
  const auto back = load_plan(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.lambda, plan.lambda);
  EXPECT_EQ(back.mode, plan.mode);
  EXPECT_EQ(back.targets, plan.targets);
  EXPECT_EQ(back.seed, plan.seed);
  EXPECT_EQ(back.assignments, plan.assignments);
}

TEST(BuildPoisoned, FlagsLabelsAndTriggerGeometry) {
  const auto data = small_dataset(10, 256, 0.01, 9);
  ASSERT_EQ(data.size(), 60u);
  const std::vector<TriggerSpec> specs{
      make_single_trigger({0.95, 0.95, 0.95}, 1, 0.05, 3),
      make_single_trigger({0.05, 0.05, 0.05}, 4, 0.05, 3)};
  const std::vector<int> targets{1, 4};
  const auto plan = allocate_targets(60, 0.05, targets, PoisonMode::kGlobal, 5);
  const auto pd = build_poisoned_dataset(data, make_trigger_map(specs), plan, 11);

  EXPECT_EQ(pd.poisoned_count(), 3u);
  ASSERT_EQ(pd.data.size(), data.size());
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!pd.poisoned[i]) {
      EXPECT_EQ(pd.data.samples[i].cloud, data.samples[i].cloud);
      EXPECT_EQ(pd.data.samples[i].label, data.samples[i].label);
      continue;
    }
    ++flagged;
  }
  EXPECT_EQ(flagged, 3u);
  for (const auto& a : plan.assignments) {
    const auto& s = pd.data.samples[a.sample];
    EXPECT_EQ(s.label, a.target);
    EXPECT_EQ(s.cloud.size(), 256u);
    const auto& spec = pd.trigger_map.at(a.target);
    for (std::size_t k = s.cloud.size() - 3; k < s.cloud.size(); ++k) {
      EXPECT_NEAR(distance(s.cloud.points[k], spec.centers[0]), spec.radius, 1e-9);
    }
  }
}

TEST(BuildPoisoned, MissingTriggerIsAnError) {
  const auto data = small_dataset(10, 64, 0.01, 1);
  const std::vector<int> targets{0};
  const auto plan = allocate_targets(20, 0.1, targets, PoisonMode::kGlobal, 1);
  EXPECT_THROW(build_poisoned_dataset(data, {}, plan, 1), std::invalid_argument);
}

TEST(AsClean, NothingFlagged) {
  const auto pd = as_clean(small_dataset(1, 32, 0.0, 1));
  EXPECT_EQ(pd.poisoned_count(), 0u);
  EXPECT_EQ(pd.poisoned.size(), 6u);  // one sample for each of the six shapes
}

}  // namespace
}  // namespace stone
