#ifndef STONE_SURROGATE_H_
#define STONE_SURROGATE_H_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "stone/geometry.h"
#include "stone/harness.h"
#include "stone/poison.h"
#include "stone/trigger.h"

namespace stone {

struct SurrogateConfig {
  double gamma = 1.0;         // RBF bandwidth
  int voxel_resolution = 8;   // bins per axis
  double lipschitz = 1.0;     // L in the decay model exp(-gamma L^2 d^2)
  // Gaussian splat width in voxel units. 0 gives hard voxel occupancy.
  double smoothing = 0.0;

  void validate() const;
};

// Voxel occupancy on a resolution^3 grid over [0,1]^3 divided by K, flattened
// x-major. With smoothing > 0 every point spreads a unit mass over the grid
// with Gaussian weights centred at the point.
std::vector<double> feature_map(const PointCloud& cloud, const SurrogateConfig& config);

// exp(-gamma * |f1 - f2|^2). Throws on a length mismatch.
double rbf_kernel(std::span<const double> f1, std::span<const double> f2, double gamma);

// Kernel-similarity sums for one query and one target class:
//   A        benign samples labelled `target`
//   B        poisoned samples assigned to `target`
//   B_other  poisoned samples assigned to other targets
//   C_total  all benign samples
// All sums are scaled by exp(-log_offset); the offset is non-zero only when
// the raw kernels underflow.
struct KernelDecomposition {
  double A = 0.0;
  double B = 0.0;
  double B_other = 0.0;
  double C_total = 0.0;
  double log_offset = 0.0;

  // (A + B) / (C_total + B + B_other); with one target this is the
  // (A + B) / (C + B) form.
  double phi() const;
};

// Nadaraya-Watson style kernel vote over a (possibly poisoned) training set.
class KernelSurrogate : public Classifier {
 public:
  KernelSurrogate(const PoisonedDataset& train, SurrogateConfig config);

  int num_classes() const override { return num_classes_; }
  // phi_c = sum_j k(q, X_j) [y_j = c] / sum_j k(q, X_j)
  std::vector<double> predict(const PointCloud& query) const override;
  KernelDecomposition decompose(const PointCloud& query, int target) const;

  const SurrogateConfig& config() const { return config_; }

 private:
  // Log-kernels -gamma |f_q - f_j|^2 for every training sample.
  std::vector<double> log_kernels(const PointCloud& query) const;

  SurrogateConfig config_;
  int num_classes_;
  std::vector<std::vector<double>> features_;
  std::vector<int> labels_;
  std::vector<char> poisoned_;
};

std::vector<double> kernel_predict(const PointCloud& query, const PoisonedDataset& train,
                                   const SurrogateConfig& config);
KernelDecomposition abc_decompose(const PointCloud& query, const PoisonedDataset& train,
                                  int target, const SurrogateConfig& config);

// gamma such that the mean kernel between a clean cloud and its triggered
// copy equals `target_kernel`.
double calibrate_gamma(std::span<const PointCloud> clean, const TriggerSpec& spec,
                       double target_kernel, const SurrogateConfig& config,
                       std::uint64_t seed);

// Closed-form decay trend g(d) = (A + B0 e) / (C + B0 e), e = exp(-gammaL2 d^2).
struct DecayModel {
  double A = 1.0;
  double B0 = 1.0;
  double C = 2.0;
  double gamma_l2 = 1.0;

  void validate() const;
};

double decay_g(const DecayModel& model, double d);
// g'(d) = -(C - A) B0 2 gammaL2 d e / (C + B0 e)^2
double decay_g_derivative(const DecayModel& model, double d);
// g(d) - A/C computed without cancellation: B0 e (C - A) / (C (C + B0 e)).
double decay_g_excess(const DecayModel& model, double d);

struct DerivativeCheckReport {
  double max_rel_error = 0.0;
  double worst_d = 0.0;
  bool all_negative = true;
  std::size_t samples = 0;
};

// Compares g' with a central difference of g at every d (> 0). The
// difference is taken on g - A/C, which has the same derivative, so large d
// keeps full relative precision. Step h = 1e-6 max(1, d).
DerivativeCheckReport decay_g_derivative_check(const DecayModel& model,
                                               std::span<const double> d_samples);

// Least-squares fit of phi(d) = (a + b e) / (1 + b e), e = exp(-s d^2). The
// asymptote `a` estimates A/C.
struct DecayFit {
  double asymptote = 0.0;
  double amplitude = 0.0;
  double rate = 0.0;
  double sse = 0.0;
  double r_squared = 0.0;
};
DecayFit fit_decay(std::span<const double> distances, std::span<const double> phi);

// Synthetic scenario for the spatial specificity and sensitivity checks.
struct SurrogateScenario {
  SynthDatasetConfig data{};          // training clouds
  int heldout_per_class = 10;         // query clouds per class
  double lambda = 0.1;                // global poisoning ratio, one target
  int target = 0;
  Vec3 r0{0.9, 0.9, 0.9};             // training trigger position
  Vec3 r1{0.1, 0.1, 0.1};             // relocated position
  Vec3 ray_end{0.1, 0.1, 0.1};        // sensitivity ray direction from r0
  double radius = 0.05;
  double trigger_fraction = 0.01;
  double calibration_kernel = 0.5;    // k(clean, triggered) after calibration
  SurrogateConfig features{};         // gamma <= 0 means calibrate
  std::uint64_t seed = 7;

  static SurrogateScenario defaults();
};

struct SpecificityReport {
  double mean_phi_r0 = 0.0;
  double mean_phi_r1 = 0.0;
  double epsilon = 1.0;               // sum_q B(X'_R1) / sum_q B(X'_R0)
  double baseline_a_over_c = 0.0;     // mean A/C at R0
  double gamma = 0.0;
  std::size_t queries = 0;
  bool holds() const { return mean_phi_r1 < mean_phi_r0; }
};

// Throws when the spheres at r0 and r1 overlap without coinciding.
SpecificityReport validate_spatial_specificity(const SurrogateScenario& scenario);

struct SensitivityPoint {
  double distance = 0.0;
  double mean_phi = 0.0;
  double mean_A = 0.0;
  double mean_B = 0.0;
  double mean_C = 0.0;
  double epsilon = 1.0;               // sum_q B(d) / sum_q B(0)
};

struct SensitivityReport {
  std::vector<SensitivityPoint> points;
  std::optional<double> spearman_rho; // empty: degenerate series
  std::optional<DecayFit> fit;
  double baseline_a_over_c = 0.0;
  double gamma = 0.0;
};

// Evaluates mean phi with the trigger moved along the ray from r0 towards
// ray_end by each distance (centers are clamped to [r, 1 - r]^3). Needs at
// least four distances.
SensitivityReport validate_spatial_sensitivity(const SurrogateScenario& scenario,
                                               std::span<const double> distances);

}  // namespace stone

#endif  // STONE_SURROGATE_H_
