#ifndef STONE_EXPERIMENTS_H_
#define STONE_EXPERIMENTS_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stone/config.h"
#include "stone/defense.h"
#include "stone/geometry.h"
#include "stone/harness.h"
#include "stone/model.h"
#include "stone/poison.h"
#include "stone/trigger.h"

namespace stone {

// Seed streams of a scenario.
enum class Stream : std::uint64_t {
  kTrainData = 1,
  kTestData = 2,
  kPlan = 3,
  kImplant = 4,
  kEval = 5,
  kTraining = 6,
  kDualZ = 7,
};

// Desk-scale attack setup: synthetic shapes, N triggers from the greedy
// placement, the mini model. Every random stream derives from `seed`.
struct DeskScenario {
  SynthDatasetConfig data{};  // training split; data.seed is ignored
  int test_per_class = 20;
  int num_targets = 2;
  TriggerKind kind = TriggerKind::kSingle;
  std::vector<int> targets;   // empty: classes 0..N-1
  double radius = 0.05;
  double trigger_fraction = 0.01;
  double lambda = 0.02;
  PoisonMode mode = PoisonMode::kGlobal;
  TrainConfig train{};        // train.seed is ignored
  double acc_tolerance = 0.03;
  std::uint64_t seed = 1;

  void validate() const;
  // Keys: classes samples_per_class test_per_class num_points jitter targets
  // target_classes trigger radius trigger_fraction lambda mode epochs
  // batch_size learning_rate acc_tolerance.
  static DeskScenario from_config(const Config& config, std::uint64_t seed);

  Dataset train_set() const;
  Dataset test_set() const;
  int points_per_sphere() const;
  std::vector<int> target_classes() const;
  // Trigger for target i at the i-th greedy position; N defaults to
  // num_targets.
  std::vector<TriggerSpec> triggers(std::optional<int> n = std::nullopt) const;

  std::uint64_t stream(Stream s) const;
};

struct BackdoorRun {
  double lambda = 0.0;
  int num_targets = 0;
  std::vector<TriggerSpec> specs;
  PoisonPlan plan;
  TrainResult training;
  RateResult acc;                       // final model
  std::vector<RateResult> target_asr;   // final model, one per spec
  std::size_t best_sum_epoch = 0;       // argmax ACC + mean ASR
  std::size_t best_acc_epoch = 0;       // argmax ACC
  std::optional<double> trigger_survival;  // only with a training-time defense

  double mean_asr() const;
};

// Poisons the training split at `lambda` (no poisoning at 0), optionally
// applies SOR to the training clouds, trains, and scores the test split.
// `num_targets` overrides the scenario's N when set.
BackdoorRun run_backdoor(const DeskScenario& scenario, double lambda,
                         std::optional<int> num_targets = std::nullopt,
                         const SorParams* training_defense = nullptr);

// One report row with final-model rates and both checkpoint selections.
ReportRow backdoor_row(const std::string& experiment, const BackdoorRun& run);

// A report plus the list of violated checks.
struct ExperimentOutcome {
  ExperimentReport report;
  std::vector<std::string> failures;

  bool passed() const { return failures.empty(); }
};

// Rows for the lambda = 0 control and every grid value.
ExperimentOutcome run_ratio_sweep(const DeskScenario& scenario,
                                  std::span<const double> lambdas);

struct SensitivityConfig {
  std::vector<double> distances{0.15, 0.3, 0.5, 0.75, 1.0, 1.3};
  Vec3 ray_end{0.05, 0.05, 0.95};
  double rho_threshold = -0.8;
  double collapse_fraction = 0.2;
  std::uint64_t seed = 0;
};

// ASR of `base` relocated along the ray from its position towards ray_end
// (centers clamped to [r, 1 - r]); the first row is the unmoved baseline.
ExperimentOutcome run_sensitivity_experiment(const Classifier& classifier,
                                             const Dataset& test, const TriggerSpec& base,
                                             const SensitivityConfig& config);

// Per-target poisoning at `lambda_per_target` for every N, plus an N = 0 row.
ExperimentOutcome run_scalability_experiment(const DeskScenario& scenario,
                                             std::span<const int> n_grid,
                                             double lambda_per_target,
                                             double min_mean_asr = 0.9);

// Trains without and with SOR on the training clouds; survival is the mean
// fraction of trigger points left in poisoned training samples.
ExperimentOutcome sor_resistance_experiment(const DeskScenario& scenario,
                                            const SorParams& params);

// A tight cluster (uniform in a cube of side `extent`) plus trigger spheres
// whose centers sit `offset` away from the cluster center.
struct OutlierGeometry {
  PointCloud cloud;
  std::vector<std::size_t> trigger_indices;
};
OutlierGeometry make_outlier_geometry(int cluster_points, double extent, double offset,
                                      TriggerKind kind, int points_per_sphere,
                                      double radius, std::uint64_t seed);

// Fraction of `trigger_indices` left after SOR.
double sor_survival(const OutlierGeometry& geometry, const SorParams& params);

}  // namespace stone

#endif  // STONE_EXPERIMENTS_H_
