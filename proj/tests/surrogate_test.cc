#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "stone/rng.h"
#include "stone/surrogate.h"

namespace stone {
namespace {

SurrogateConfig hard(double gamma = 1.0) {
  SurrogateConfig c;
  c.gamma = gamma;
  return c;
}

PoisonedDataset clean_set(std::vector<LabeledCloud> samples, int classes) {
  Dataset d;
  d.num_classes = classes;
  d.samples = std::move(samples);
  return as_clean(std::move(d));
}

TEST(FeatureMap, SinglePointOccupiesOneVoxel) {
  const PointCloud c{{{0.01, 0.01, 0.01}}};
  const auto f = feature_map(c, hard());
  ASSERT_EQ(f.size(), 512u);
  EXPECT_EQ(f[0], 1.0);
  EXPECT_EQ(std::accumulate(f.begin(), f.end(), 0.0), 1.0);
  const auto g = feature_map(PointCloud{{{1.0, 1.0, 1.0}}}, hard());
  EXPECT_EQ(g[511], 1.0);
  // x-major flattening: x is the slowest axis.
  const auto h = feature_map(PointCloud{{{0.99, 0.01, 0.01}}}, hard());
  EXPECT_EQ(h[7 * 64], 1.0);
}

TEST(FeatureMap, SumsToOne) {
  const auto cloud = synth_shape(ShapeKind::kTorus, 500, 0.01, 3);
  for (double s : {0.0, 0.7, 1.5}) {
    auto cfg = hard();
    cfg.smoothing = s;
    const auto f = feature_map(cloud, cfg);
    EXPECT_NEAR(std::accumulate(f.begin(), f.end(), 0.0), 1.0, 1e-12) << "smoothing " << s;
    for (double v : f) EXPECT_GE(v, 0.0);
  }
}

TEST(FeatureMap, MovingTriggerChangesTwoBins) {
  const auto cloud = synth_shape(ShapeKind::kCylinder, 1024, 0.01, 5);
  const auto a = implant(cloud, make_single_trigger({0.95, 0.95, 0.95}, 0), 21);
  const auto b = implant(cloud, make_single_trigger({0.05, 0.05, 0.05}, 0), 21);
  const auto fa = feature_map(a, hard());
  const auto fb = feature_map(b, hard());
  int changed = 0;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    const double diff = fa[i] - fb[i];
    if (std::abs(diff) < 1e-15) continue;
    ++changed;
    EXPECT_NEAR(std::abs(diff), 10.0 / 1024.0, 1e-15);
  }
  EXPECT_EQ(changed, 2);
  EXPECT_NEAR(fa[511] - fb[511], 10.0 / 1024.0, 1e-15);
  EXPECT_NEAR(fb[0] - fa[0], 10.0 / 1024.0, 1e-15);
}

TEST(FeatureMap, ImplantMovesBoundedMass) {
  const auto cloud = synth_shape(ShapeKind::kCross, 1024, 0.01, 6);
  const auto spec = make_single_trigger({0.5, 0.5, 0.5}, 0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto f0 = feature_map(cloud, hard());
    const auto f1 = feature_map(implant(cloud, spec, seed), hard());
    double l1 = 0.0;
    for (std::size_t i = 0; i < f0.size(); ++i) l1 += std::abs(f0[i] - f1[i]);
    EXPECT_LE(l1, 2.0 * 10.0 / 1024.0 + 1e-12);
  }
}

TEST(Kernel, Examples) {
  const std::vector<double> a{0.0, 0.0}, b{1.0, 1.0};
  EXPECT_DOUBLE_EQ(rbf_kernel(a, a, 3.0), 1.0);
  EXPECT_DOUBLE_EQ(rbf_kernel(a, b, 0.5), std::exp(-1.0));
  EXPECT_THROW(rbf_kernel(a, std::vector<double>{1.0}, 1.0), std::invalid_argument);
}

TEST(KernelSurrogateTest, TinyGammaGivesClassFrequencies) {
  std::vector<LabeledCloud> s;
  for (int i = 0; i < 6; ++i) s.push_back({synth_shape(ShapeKind::kTorus, 64, 0.01, i), i < 1 ? 0 : (i < 3 ? 1 : 2)});
  const auto train = clean_set(s, 3);
  const auto p = kernel_predict(synth_shape(ShapeKind::kPlane, 64, 0.01, 9), train, hard(1e-12));
  EXPECT_NEAR(p[0], 1.0 / 6.0, 1e-9);
  EXPECT_NEAR(p[1], 2.0 / 6.0, 1e-9);
  EXPECT_NEAR(p[2], 3.0 / 6.0, 1e-9);
}

TEST(KernelSurrogateTest, DuplicateVoteTwoThirds) {
  const auto a = synth_shape(ShapeKind::kTorus, 64, 0.0, 1);
  const auto b = synth_shape(ShapeKind::kPlane, 64, 0.0, 2);
  const auto train = clean_set({{a, 0}, {a, 0}, {b, 1}}, 2);
  // Query equidistant from a and b in feature space: all kernels equal.
  const auto p = kernel_predict(PointCloud{{{0.5, 0.5, 0.5}}}, train, hard(1e-12));
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-9);
}

TEST(KernelSurrogateTest, IsolatedSampleDominates) {
  const auto a = synth_shape(ShapeKind::kTorus, 256, 0.01, 1);
  const auto b = synth_shape(ShapeKind::kPlane, 256, 0.01, 2);
  const auto c = synth_shape(ShapeKind::kCross, 256, 0.01, 3);
  const auto train = clean_set({{a, 0}, {b, 1}, {c, 2}}, 3);
  const auto p = kernel_predict(b, train, hard(1e4));
  EXPECT_GT(p[1], 0.99);
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-12);
}

PoisonedDataset poisoned_toy(std::uint64_t seed) {
  SynthDatasetConfig cfg;
  cfg.samples_per_class = 5;
  cfg.num_points = 256;
  cfg.seed = seed;
  const auto data = synth_dataset(cfg);
  const std::vector<TriggerSpec> specs{make_single_trigger({0.95, 0.95, 0.95}, 1, 0.05, 3),
                                       make_single_trigger({0.05, 0.05, 0.05}, 2, 0.05, 3)};
  const std::vector<int> targets{1, 2};
  const auto plan = allocate_targets(30, 0.2, targets, PoisonMode::kGlobal, seed);
  return build_poisoned_dataset(data, make_trigger_map(specs), plan, seed + 1);
}

TEST(Decompose, PhiMatchesPrediction) {
  const auto train = poisoned_toy(4);
  const KernelSurrogate model(train, hard(50.0));
  for (int q = 0; q < 5; ++q) {
    const auto query = synth_shape(kAllShapeKinds[q], 256, 0.01, 100 + q);
    const auto p = model.predict(query);
    for (int t : {1, 2}) {
      const auto d = model.decompose(query, t);
      EXPECT_NEAR(d.phi(), p[t], 1e-10);
      EXPECT_GT(d.B, 0.0);
    }
  }
}

TEST(Decompose, UnderflowUsesOffset) {
  const auto train = poisoned_toy(5);
  const KernelSurrogate model(train, hard(1e7));
  const auto query = synth_shape(ShapeKind::kTorus, 256, 0.01, 77);
  const auto d = model.decompose(query, 1);
  EXPECT_NE(d.log_offset, 0.0);
  EXPECT_TRUE(std::isfinite(d.phi()));
  EXPECT_NEAR(d.phi(), model.predict(query)[1], 1e-10);
}

TEST(Decompose, NoPoisonMeansNoB) {
  const auto train = clean_set({{synth_shape(ShapeKind::kTorus, 64, 0.01, 1), 0},
                                {synth_shape(ShapeKind::kPlane, 64, 0.01, 2), 1}},
                               2);
  const auto d = abc_decompose(synth_shape(ShapeKind::kCross, 64, 0.01, 3), train, 1, hard(5.0));
  EXPECT_EQ(d.B, 0.0);
  EXPECT_EQ(d.B_other, 0.0);
  EXPECT_NEAR(d.phi(), d.A / d.C_total, 1e-15);
}

TEST(Decompose, PoisonedQueryGoesToTarget) {
  const auto train = poisoned_toy(6);
  int poisoned_index = -1;
  for (std::size_t i = 0; i < train.poisoned.size(); ++i)
    if (train.poisoned[i]) poisoned_index = static_cast<int>(i);
  ASSERT_GE(poisoned_index, 0);
  const auto& sample = train.data.samples[poisoned_index];
  const auto d = abc_decompose(sample.cloud, train, sample.label, hard(1e5));
  EXPECT_GT(d.phi(), 0.999);
}

TEST(Calibrate, HitsTargetKernel) {
  std::vector<PointCloud> clean;
  for (int i = 0; i < 8; ++i) clean.push_back(synth_shape(kAllShapeKinds[i % 6], 1024, 0.01, i));
  const auto spec = make_single_trigger({0.9, 0.9, 0.9}, 0);
  const auto cfg = hard();
  const double gamma = calibrate_gamma(clean, spec, 0.5, cfg, 3);
  ASSERT_GT(gamma, 0.0);
  // The mean squared distance must map back to the requested kernel value.
  double sq = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const auto f0 = feature_map(clean[i], cfg);
    const auto f1 = feature_map(implant(clean[i], spec, mix_seed(3, i)), cfg);
    for (std::size_t k = 0; k < f0.size(); ++k) sq += (f0[k] - f1[k]) * (f0[k] - f1[k]);
  }
  EXPECT_NEAR(std::exp(-gamma * sq / clean.size()), 0.5, 1e-12);
  EXPECT_THROW(calibrate_gamma(clean, spec, 1.0, cfg, 3), std::invalid_argument);
  EXPECT_THROW(calibrate_gamma({}, spec, 0.5, cfg, 3), std::invalid_argument);
}

TEST(Decay, HandValues) {
  const DecayModel m{.A = 1.0, .B0 = 1.0, .C = 2.0, .gamma_l2 = 1.0};
  EXPECT_DOUBLE_EQ(decay_g(m, 0.0), 2.0 / 3.0);
  EXPECT_NEAR(decay_g(m, 10.0), 0.5, 1e-15);
  EXPECT_DOUBLE_EQ(decay_g_derivative(m, 0.0), 0.0);
  const double e = std::exp(-1.0);
  EXPECT_NEAR(decay_g_derivative(m, 1.0), -2.0 * e / ((2.0 + e) * (2.0 + e)), 1e-15);
  EXPECT_NEAR(decay_g_excess(m, 1.0), decay_g(m, 1.0) - 0.5, 1e-15);
  EXPECT_GT(decay_g_excess(m, 20.0), 0.0);
}

TEST(Decay, DerivativeMatchesFiniteDifference) {
  std::vector<double> ds;
  for (int i = 1; i <= 60; ++i) ds.push_back(0.05 * i);
  for (const DecayModel m : {DecayModel{}, DecayModel{.A = 0.1, .B0 = 5.0, .C = 3.0, .gamma_l2 = 4.0},
                             DecayModel{.A = 0.0, .B0 = 0.2, .C = 1.0, .gamma_l2 = 0.3}}) {
    const auto r = decay_g_derivative_check(m, ds);
    EXPECT_EQ(r.samples, ds.size());
    EXPECT_LT(r.max_rel_error, 1e-5);
    EXPECT_TRUE(r.all_negative);
  }
}

TEST(Decay, ValidateRejectsBadModels) {
  EXPECT_THROW((DecayModel{.C = 0.0}.validate()), std::invalid_argument);
  EXPECT_THROW((DecayModel{.gamma_l2 = 0.0}.validate()), std::invalid_argument);
}

TEST(FitDecay, RecoversKnownCurve) {
  const double a = 0.08, b = 3.0, s = 2.5;
  std::vector<double> d, phi;
  for (int i = 0; i <= 12; ++i) {
    const double x = 0.1 * i;
    const double e = std::exp(-s * x * x);
    d.push_back(x);
    phi.push_back((a + b * e) / (1.0 + b * e));
  }
  const auto fit = fit_decay(d, phi);
  EXPECT_NEAR(fit.asymptote, a, 1e-6);
  EXPECT_NEAR(fit.amplitude, b, 1e-4);
  EXPECT_NEAR(fit.rate, s, 1e-4);
  EXPECT_GT(fit.r_squared, 0.999999);
}

TEST(Scenario, Preconditions) {
  auto scn = SurrogateScenario::defaults();
  scn.r1 = {0.88, 0.9, 0.9};
  EXPECT_THROW(validate_spatial_specificity(scn), std::invalid_argument);
  const std::vector<double> three{0.1, 0.2, 0.3};
  EXPECT_THROW(validate_spatial_sensitivity(SurrogateScenario::defaults(), three),
               std::invalid_argument);
}

}  // namespace
}  // namespace stone
