#include "stone/surrogate.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include "stone/rng.h"
#include "stone/stats.h"

namespace stone {
namespace {

// Below this log-kernel the raw exponentials are rescaled.
constexpr double kUnderflowLog = -600.0;

// Neumaier-compensated running sum; the order of add() calls is fixed by the
// training-set order, so results are reproducible bit for bit.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      carry_ += (sum_ - t) + v;
    } else {
      carry_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

double squared_feature_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

int voxel_index(double x, int res) {
  const int i = static_cast<int>(std::floor(x * res));
  return std::clamp(i, 0, res - 1);
}

}  // namespace

void SurrogateConfig::validate() const {
  if (!(gamma > 0.0)) throw std::invalid_argument("surrogate: gamma must be > 0");
  if (voxel_resolution < 2) {
    throw std::invalid_argument("surrogate: voxel resolution must be >= 2");
  }
  if (!(lipschitz > 0.0)) throw std::invalid_argument("surrogate: L must be > 0");
  if (!(smoothing >= 0.0)) throw std::invalid_argument("surrogate: smoothing must be >= 0");
}

std::vector<double> feature_map(const PointCloud& cloud, const SurrogateConfig& config) {
  if (cloud.empty()) throw std::invalid_argument("feature_map: empty cloud");
  const int res = config.voxel_resolution;
  if (res < 2) throw std::invalid_argument("surrogate: voxel resolution must be >= 2");
  std::vector<double> f(static_cast<std::size_t>(res) * res * res, 0.0);
  const double inv_k = 1.0 / static_cast<double>(cloud.size());

  if (config.smoothing <= 0.0) {
    for (const auto& p : cloud.points) {
      const int ix = voxel_index(p[0], res);
      const int iy = voxel_index(p[1], res);
      const int iz = voxel_index(p[2], res);
      f[(static_cast<std::size_t>(ix) * res + iy) * res + iz] += inv_k;
    }
    return f;
  }

  const double sigma = config.smoothing / res;
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  std::array<std::vector<double>, 3> w;
  for (auto& axis : w) axis.resize(res);
  for (const auto& p : cloud.points) {
    for (int a = 0; a < 3; ++a) {
      double total = 0.0;
      for (int b = 0; b < res; ++b) {
        const double c = (b + 0.5) / res;
        const double d = p[a] - c;
        w[a][b] = std::exp(-d * d * inv_two_var);
        total += w[a][b];
      }
      for (int b = 0; b < res; ++b) w[a][b] /= total;
    }
    for (int ix = 0; ix < res; ++ix) {
      const double wx = w[0][ix] * inv_k;
      for (int iy = 0; iy < res; ++iy) {
        const double wxy = wx * w[1][iy];
        double* row = &f[(static_cast<std::size_t>(ix) * res + iy) * res];
        for (int iz = 0; iz < res; ++iz) row[iz] += wxy * w[2][iz];
      }
    }
  }
  return f;
}

double rbf_kernel(std::span<const double> f1, std::span<const double> f2, double gamma) {
  if (f1.size() != f2.size()) throw std::invalid_argument("rbf_kernel: length mismatch");
  return std::exp(-gamma * squared_feature_distance(f1, f2));
}

double KernelDecomposition::phi() const {
  const double denom = C_total + B + B_other;
  if (!(denom > 0.0)) return 0.0;
  return (A + B) / denom;
}

KernelSurrogate::KernelSurrogate(const PoisonedDataset& train, SurrogateConfig config)
    : config_(config), num_classes_(train.data.num_classes) {
  config_.validate();
  if (train.data.samples.empty()) throw std::invalid_argument("surrogate: empty training set");
  if (train.poisoned.size() != train.data.size()) {
    throw std::invalid_argument("surrogate: one poison flag per sample required");
  }
  features_.reserve(train.data.size());
  for (const auto& s : train.data.samples) {
    features_.push_back(feature_map(s.cloud, config_));
    labels_.push_back(s.label);
  }
  poisoned_ = train.poisoned;
}

std::vector<double> KernelSurrogate::log_kernels(const PointCloud& query) const {
  const auto fq = feature_map(query, config_);
  std::vector<double> out(features_.size());
  for (std::size_t j = 0; j < features_.size(); ++j) {
    out[j] = -config_.gamma * squared_feature_distance(fq, features_[j]);
  }
  return out;
}

std::vector<double> KernelSurrogate::predict(const PointCloud& query) const {
  const auto logs = log_kernels(query);
  const double top = *std::max_element(logs.begin(), logs.end());
  const double offset = top < kUnderflowLog ? top : 0.0;
  std::vector<CompensatedSum> per_class(num_classes_);
  CompensatedSum total;
  for (std::size_t j = 0; j < logs.size(); ++j) {
    const double k = std::exp(logs[j] - offset);
    per_class[labels_[j]].add(k);
    total.add(k);
  }
  std::vector<double> phi(num_classes_);
  const double denom = total.value();
  for (int c = 0; c < num_classes_; ++c) phi[c] = per_class[c].value() / denom;
  return phi;
}

KernelDecomposition KernelSurrogate::decompose(const PointCloud& query, int target) const {
  const auto logs = log_kernels(query);
  const double top = *std::max_element(logs.begin(), logs.end());
  KernelDecomposition out;
  out.log_offset = top < kUnderflowLog ? top : 0.0;
  CompensatedSum a, b, b_other, c;
  for (std::size_t j = 0; j < logs.size(); ++j) {
    const double k = std::exp(logs[j] - out.log_offset);
    if (poisoned_[j]) {
      (labels_[j] == target ? b : b_other).add(k);
    } else {
      c.add(k);
      if (labels_[j] == target) a.add(k);
    }
  }
  out.A = a.value();
  out.B = b.value();
  out.B_other = b_other.value();
  out.C_total = c.value();
  return out;
}

std::vector<double> kernel_predict(const PointCloud& query, const PoisonedDataset& train,
                                   const SurrogateConfig& config) {
  return KernelSurrogate(train, config).predict(query);
}

KernelDecomposition abc_decompose(const PointCloud& query, const PoisonedDataset& train,
                                  int target, const SurrogateConfig& config) {
  return KernelSurrogate(train, config).decompose(query, target);
}

double calibrate_gamma(std::span<const PointCloud> clean, const TriggerSpec& spec,
                       double target_kernel, const SurrogateConfig& config,
                       std::uint64_t seed) {
  if (clean.empty()) throw std::invalid_argument("calibrate_gamma: no clouds");
  if (!(target_kernel > 0.0 && target_kernel < 1.0)) {
    throw std::invalid_argument("calibrate_gamma: target kernel must lie in (0, 1)");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const auto triggered = implant(clean[i], spec, mix_seed(seed, i));
    total += squared_feature_distance(feature_map(clean[i], config),
                                      feature_map(triggered, config));
  }
  const double mean_sq = total / static_cast<double>(clean.size());
  if (!(mean_sq > 0.0)) throw std::invalid_argument("calibrate_gamma: trigger is invisible");
  return -std::log(target_kernel) / mean_sq;
}

void DecayModel::validate() const {
  if (!(gamma_l2 > 0.0)) throw std::invalid_argument("decay model: gammaL^2 must be > 0");
  if (!(C > 0.0) || !(A >= 0.0) || !(B0 >= 0.0)) {
    throw std::invalid_argument("decay model: need C > 0, A >= 0, B0 >= 0");
  }
}

double decay_g(const DecayModel& m, double d) {
  const double e = std::exp(-m.gamma_l2 * d * d);
  return (m.A + m.B0 * e) / (m.C + m.B0 * e);
}

double decay_g_derivative(const DecayModel& m, double d) {
  const double e = std::exp(-m.gamma_l2 * d * d);
  const double denom = m.C + m.B0 * e;
  return -(m.C - m.A) * m.B0 * 2.0 * m.gamma_l2 * d * e / (denom * denom);
}

double decay_g_excess(const DecayModel& m, double d) {
  const double e = std::exp(-m.gamma_l2 * d * d);
  return m.B0 * e * (m.C - m.A) / (m.C * (m.C + m.B0 * e));
}

DerivativeCheckReport decay_g_derivative_check(const DecayModel& model,
                                               std::span<const double> d_samples) {
  model.validate();
  DerivativeCheckReport report;
  for (double d : d_samples) {
    if (!(d > 0.0)) throw std::invalid_argument("derivative check: samples must be > 0");
    const double h = 1e-6 * std::max(1.0, d);
    const double numeric =
        (decay_g_excess(model, d + h) - decay_g_excess(model, d - h)) / (2.0 * h);
    const double analytic = decay_g_derivative(model, d);
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    const double rel = scale > 0.0 ? std::abs(analytic - numeric) / scale : 0.0;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_d = d;
    }
    if (!(analytic < 0.0)) report.all_negative = false;
    ++report.samples;
  }
  return report;
}

namespace {

struct DecayParams {
  double a, log_b, log_s;
};

double decay_model_value(const DecayParams& p, double d) {
  const double be = std::exp(p.log_b - std::exp(p.log_s) * d * d);
  return (p.a + be) / (1.0 + be);
}

double decay_sse(const DecayParams& p, std::span<const double> x, std::span<const double> y) {
  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - decay_model_value(p, x[i]);
    sse += r * r;
  }
  return sse;
}

// Solves the 3x3 system M v = r in place by Gaussian elimination with
// partial pivoting. Returns false when singular.
bool solve3(std::array<std::array<double, 3>, 3> m, std::array<double, 3>& r) {
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int row = col + 1; row < 3; ++row) {
      if (std::abs(m[row][col]) > std::abs(m[piv][col])) piv = row;
    }
    if (std::abs(m[piv][col]) < 1e-300) return false;
    std::swap(m[piv], m[col]);
    std::swap(r[piv], r[col]);
    for (int row = col + 1; row < 3; ++row) {
      const double f = m[row][col] / m[col][col];
      for (int k = col; k < 3; ++k) m[row][k] -= f * m[col][k];
      r[row] -= f * r[col];
    }
  }
  for (int col = 2; col >= 0; --col) {
    for (int k = col + 1; k < 3; ++k) r[col] -= m[col][k] * r[k];
    r[col] /= m[col][col];
  }
  return true;
}

// Levenberg-Marquardt with a forward-difference Jacobian.
DecayParams refine_decay(DecayParams p, std::span<const double> x, std::span<const double> y) {
  double lambda = 1e-3;
  double sse = decay_sse(p, x, y);
  for (int iter = 0; iter < 200; ++iter) {
    std::array<std::array<double, 3>, 3> jtj{};
    std::array<double, 3> jtr{};
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double f0 = decay_model_value(p, x[i]);
      std::array<double, 3> grad;
      for (int k = 0; k < 3; ++k) {
        DecayParams q = p;
        double* field = k == 0 ? &q.a : (k == 1 ? &q.log_b : &q.log_s);
        const double h = 1e-7 * std::max(1.0, std::abs(*field));
        *field += h;
        grad[k] = (decay_model_value(q, x[i]) - f0) / h;
      }
      const double r = y[i] - f0;
      for (int a = 0; a < 3; ++a) {
        jtr[a] += grad[a] * r;
        for (int b = 0; b < 3; ++b) jtj[a][b] += grad[a] * grad[b];
      }
    }
    bool improved = false;
    while (lambda < 1e12) {
      auto m = jtj;
      for (int a = 0; a < 3; ++a) m[a][a] += lambda * (jtj[a][a] + 1e-12);
      std::array<double, 3> step = jtr;
      if (!solve3(m, step)) {
        lambda *= 10.0;
        continue;
      }
      const DecayParams q{p.a + step[0], p.log_b + step[1], p.log_s + step[2]};
      const double candidate = decay_sse(q, x, y);
      if (candidate < sse) {
        const double gain = sse - candidate;
        p = q;
        sse = candidate;
        lambda = std::max(lambda * 0.3, 1e-12);
        improved = gain > 1e-15 * std::max(sse, 1e-30);
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) break;
  }
  return p;
}

}  // namespace

DecayFit fit_decay(std::span<const double> distances, std::span<const double> phi) {
  if (distances.size() != phi.size() || distances.size() < 3) {
    throw std::invalid_argument("fit_decay: need >= 3 matching points");
  }
  // Initial guesses: asymptote at the farthest value, amplitude from the
  // nearest, and a rate grid spanning the sampled range.
  std::size_t near = 0, far = 0;
  for (std::size_t i = 1; i < distances.size(); ++i) {
    if (distances[i] < distances[near]) near = i;
    if (distances[i] > distances[far]) far = i;
  }
  const double a0 = phi[far];
  const double b0 = std::max((phi[near] - a0) / std::max(1.0 - phi[near], 1e-6), 1e-6);
  const double span = std::max(distances[far], 1e-6);

  DecayParams best{a0, std::log(b0), 0.0};
  double best_sse = std::numeric_limits<double>::infinity();
  for (int k = -4; k <= 8; ++k) {
    const double s = std::pow(2.0, k) / (span * span);
    const auto p = refine_decay({a0, std::log(b0), std::log(s)}, distances, phi);
    const double sse = decay_sse(p, distances, phi);
    if (sse < best_sse) {
      best_sse = sse;
      best = p;
    }
  }

  const double m = mean(phi);
  double sst = 0.0;
  for (double v : phi) sst += (v - m) * (v - m);
  DecayFit fit;
  fit.asymptote = best.a;
  fit.amplitude = std::exp(best.log_b);
  fit.rate = std::exp(best.log_s);
  fit.sse = best_sse;
  fit.r_squared = sst > 0.0 ? 1.0 - best_sse / sst : 1.0;
  return fit;
}

SurrogateScenario SurrogateScenario::defaults() {
  SurrogateScenario s;
  s.data.samples_per_class = 40;
  s.data.num_points = 2048;
  s.data.jitter = 0.01;
  s.data.seed = 11;
  s.heldout_per_class = 30;
  s.lambda = 0.1;
  s.calibration_kernel = 0.2;
  s.features.gamma = 0.0;
  s.features.smoothing = 1.5;
  return s;
}

namespace {

struct PreparedScenario {
  std::unique_ptr<KernelSurrogate> surrogate;
  std::vector<PointCloud> queries;
  TriggerSpec base_spec;
  std::uint64_t query_seed = 0;
  double gamma = 0.0;
};

PreparedScenario prepare(const SurrogateScenario& sc) {
  const Dataset train = synth_dataset(sc.data);
  SynthDatasetConfig heldout_cfg = sc.data;
  heldout_cfg.samples_per_class = sc.heldout_per_class;
  heldout_cfg.seed = mix_seed(sc.data.seed, 0x5eed);
  const Dataset heldout = synth_dataset(heldout_cfg);

  const int j = trigger_point_budget(sc.data.num_points, sc.trigger_fraction);
  PreparedScenario out;
  out.base_spec = make_single_trigger(sc.r0, sc.target, sc.radius, j);
  out.query_seed = mix_seed(sc.seed, 3);

  SurrogateConfig cfg = sc.features;
  if (!(cfg.gamma > 0.0)) {
    std::vector<PointCloud> clouds;
    for (const auto& s : train.samples) clouds.push_back(s.cloud);
    cfg.gamma = 1.0;
    cfg.gamma = calibrate_gamma(clouds, out.base_spec, sc.calibration_kernel, cfg,
                                mix_seed(sc.seed, 1));
  }
  out.gamma = cfg.gamma;

  PoisonedDataset poisoned = as_clean(train);
  if (sc.lambda > 0.0) {
    std::vector<int> labels;
    for (const auto& s : train.samples) labels.push_back(s.label);
    const std::vector<int> targets{sc.target};
    const auto plan = allocate_targets(static_cast<int>(train.size()), sc.lambda, targets,
                                       PoisonMode::kGlobal, mix_seed(sc.seed, 2));
    poisoned = build_poisoned_dataset(train, make_trigger_map(std::span(&out.base_spec, 1)),
                                      plan, mix_seed(sc.seed, 4));
  }
  out.surrogate = std::make_unique<KernelSurrogate>(poisoned, cfg);
  for (const auto& s : heldout.samples) {
    if (s.label != sc.target) out.queries.push_back(s.cloud);
  }
  if (out.queries.empty()) throw std::invalid_argument("scenario has no non-target queries");
  return out;
}

struct PositionStats {
  std::vector<KernelDecomposition> per_query;
  double mean_phi = 0.0, mean_a = 0.0, mean_b = 0.0, mean_c = 0.0, mean_a_over_c = 0.0;
};

PositionStats evaluate_position(const PreparedScenario& prep, const Vec3& center,
                                int target) {
  TriggerSpec spec = prep.base_spec;
  spec.centers = {center};
  PositionStats st;
  for (std::size_t i = 0; i < prep.queries.size(); ++i) {
    const auto q = implant(prep.queries[i], spec, mix_seed(prep.query_seed, i));
    const auto dec = prep.surrogate->decompose(q, target);
    const double scale = std::exp(dec.log_offset);
    st.mean_phi += dec.phi();
    st.mean_a += dec.A * scale;
    st.mean_b += dec.B * scale;
    st.mean_c += dec.C_total * scale;
    st.mean_a_over_c += dec.C_total > 0.0 ? dec.A / dec.C_total : 0.0;
    st.per_query.push_back(dec);
  }
  const double n = static_cast<double>(prep.queries.size());
  st.mean_phi /= n;
  st.mean_a /= n;
  st.mean_b /= n;
  st.mean_c /= n;
  st.mean_a_over_c /= n;
  return st;
}

// Sum of B over all queries at `here` divided by the same sum at
// `reference`, combined in log space so per-query offsets cancel.
double mean_epsilon(const PositionStats& here, const PositionStats& reference) {
  auto log_total = [](const PositionStats& st) {
    std::vector<double> logs;
    for (const auto& d : st.per_query) {
      if (d.B > 0.0) logs.push_back(std::log(d.B) + d.log_offset);
    }
    if (logs.empty()) return -std::numeric_limits<double>::infinity();
    const double top = *std::max_element(logs.begin(), logs.end());
    double total = 0.0;
    for (double l : logs) total += std::exp(l - top);
    return top + std::log(total);
  };
  const double ref = log_total(reference);
  if (!std::isfinite(ref)) return 1.0;
  return std::exp(log_total(here) - ref);
}

Vec3 clamp_center(Vec3 c, double r) {
  for (auto& v : c) v = std::clamp(v, r, 1.0 - r);
  return c;
}

}  // namespace

SpecificityReport validate_spatial_specificity(const SurrogateScenario& scenario) {
  const double sep = distance(scenario.r0, scenario.r1);
  if (sep > 0.0 && sep < 2.0 * scenario.radius) {
    throw std::invalid_argument("spatial specificity: R0 and R1 overlap");
  }
  const auto prep = prepare(scenario);
  const auto at_r0 = evaluate_position(prep, scenario.r0, scenario.target);
  const auto at_r1 = evaluate_position(prep, scenario.r1, scenario.target);
  SpecificityReport report;
  report.mean_phi_r0 = at_r0.mean_phi;
  report.mean_phi_r1 = at_r1.mean_phi;
  report.epsilon = mean_epsilon(at_r1, at_r0);
  report.baseline_a_over_c = at_r0.mean_a_over_c;
  report.gamma = prep.gamma;
  report.queries = prep.queries.size();
  return report;
}

SensitivityReport validate_spatial_sensitivity(const SurrogateScenario& scenario,
                                               std::span<const double> distances) {
  if (distances.size() < 4) {
    throw std::invalid_argument("spatial sensitivity: need at least 4 distances");
  }
  for (double d : distances) {
    if (!(d >= 0.0)) throw std::invalid_argument("spatial sensitivity: negative distance");
  }
  const auto prep = prepare(scenario);
  const Vec3 dir_raw = scenario.ray_end - scenario.r0;
  const double dir_len = std::sqrt(dot(dir_raw, dir_raw));
  if (!(dir_len > 0.0)) throw std::invalid_argument("spatial sensitivity: empty ray");
  const Vec3 dir = (1.0 / dir_len) * dir_raw;

  SensitivityReport report;
  report.gamma = prep.gamma;
  const auto reference = evaluate_position(prep, scenario.r0, scenario.target);
  report.baseline_a_over_c = reference.mean_a_over_c;

  std::vector<double> xs, ys;
  for (double d : distances) {
    const Vec3 center = clamp_center(scenario.r0 + d * dir, scenario.radius);
    const auto st = evaluate_position(prep, center, scenario.target);
    SensitivityPoint p;
    p.distance = distance(center, scenario.r0);
    p.mean_phi = st.mean_phi;
    p.mean_A = st.mean_a;
    p.mean_B = st.mean_b;
    p.mean_C = st.mean_c;
    p.epsilon = mean_epsilon(st, reference);
    report.points.push_back(p);
    xs.push_back(p.distance);
    ys.push_back(p.mean_phi);
  }
  report.spearman_rho = spearman(xs, ys);
  if (report.spearman_rho) report.fit = fit_decay(xs, ys);
  return report;
}

}  // namespace stone
