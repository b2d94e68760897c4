#include "stone/experiments.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "stone/placement.h"
#include "stone/rng.h"
#include "stone/stats.h"

namespace stone {
namespace {

std::string fmt_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string fmt_rate(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

const char* kAccNote =
    "ACC tolerance 0.03: desk-scale synthetic splits are small, so clean "
    "accuracy varies more between runs than on full benchmarks";

}  // namespace

void DeskScenario::validate() const {
  if (data.classes.empty()) throw std::invalid_argument("scenario: no classes");
  if (data.samples_per_class < 1 || test_per_class < 1) {
    throw std::invalid_argument("scenario: need at least one sample per class");
  }
  if (num_targets < 1) throw std::invalid_argument("scenario: N must be >= 1");
  if (!(radius > 0.0)) throw std::invalid_argument("scenario: radius must be > 0");
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("scenario: lambda must lie in [0, 1]");
  }
  for (int t : targets) {
    if (t < 0 || t >= static_cast<int>(data.classes.size())) {
      throw std::invalid_argument("scenario: target class out of range");
    }
  }
  if (!targets.empty() && static_cast<int>(targets.size()) < num_targets) {
    throw std::invalid_argument("scenario: fewer target classes than N");
  }
  train.validate();
}

DeskScenario DeskScenario::from_config(const Config& config, std::uint64_t seed) {
  DeskScenario s;
  s.seed = seed;
  if (auto names = config.get("classes")) {
    s.data.classes.clear();
    std::string item;
    for (char ch : *names + ",") {
      if (ch == ',' || ch == ' ' || ch == '\t') {
        if (!item.empty()) s.data.classes.push_back(parse_shape_kind(item));
        item.clear();
      } else {
        item.push_back(ch);
      }
    }
  }
  s.data.samples_per_class =
      static_cast<int>(config.get_int("samples_per_class", s.data.samples_per_class));
  s.test_per_class = static_cast<int>(config.get_int("test_per_class", s.test_per_class));
  s.data.num_points = static_cast<int>(config.get_int("num_points", s.data.num_points));
  s.data.jitter = config.get_double("jitter", s.data.jitter);
  s.num_targets = static_cast<int>(config.get_int("targets", s.num_targets));
  for (auto t : config.get_ints("target_classes", {})) s.targets.push_back(static_cast<int>(t));
  s.kind = parse_trigger_kind(config.get_string("trigger", std::string(to_string(s.kind))));
  s.radius = config.get_double("radius", s.radius);
  s.trigger_fraction = config.get_double("trigger_fraction", s.trigger_fraction);
  s.lambda = config.get_double("lambda", s.lambda);
  s.mode = parse_poison_mode(config.get_string("mode", std::string(to_string(s.mode))));
  s.train.epochs = static_cast<int>(config.get_int("epochs", s.train.epochs));
  s.train.batch_size = static_cast<int>(config.get_int("batch_size", s.train.batch_size));
  s.train.learning_rate = config.get_double("learning_rate", s.train.learning_rate);
  s.acc_tolerance = config.get_double("acc_tolerance", s.acc_tolerance);
  s.validate();
  return s;
}

std::uint64_t DeskScenario::stream(Stream s) const {
  return mix_seed(seed, static_cast<std::uint64_t>(s));
}

Dataset DeskScenario::train_set() const {
  SynthDatasetConfig cfg = data;
  cfg.seed = stream(Stream::kTrainData);
  return synth_dataset(cfg);
}

Dataset DeskScenario::test_set() const {
  SynthDatasetConfig cfg = data;
  cfg.samples_per_class = test_per_class;
  cfg.seed = stream(Stream::kTestData);
  return synth_dataset(cfg);
}

int DeskScenario::points_per_sphere() const {
  return trigger_point_budget(data.num_points, trigger_fraction);
}

std::vector<int> DeskScenario::target_classes() const {
  if (!targets.empty()) return targets;
  std::vector<int> out;
  for (int i = 0; i < num_targets; ++i) out.push_back(i);
  return out;
}

std::vector<TriggerSpec> DeskScenario::triggers(std::optional<int> n) const {
  const int count = n.value_or(num_targets);
  std::vector<int> classes = target_classes();
  if (targets.empty()) {
    classes.clear();
    for (int i = 0; i < count; ++i) classes.push_back(i);
  }
  if (static_cast<int>(classes.size()) < count ||
      count > static_cast<int>(data.classes.size())) {
    throw std::invalid_argument("scenario: not enough target classes for N");
  }
  classes.resize(count);
  const PlacementResult placed =
      kind == TriggerKind::kSingle
          ? greedy_single_placement(count)
          : greedy_dual_placement(count, CandidateGrid{.dims = 2}, {},
                                  stream(Stream::kDualZ));
  return placed.to_specs(classes, radius, points_per_sphere());
}

double BackdoorRun::mean_asr() const {
  if (target_asr.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : target_asr) s += r.rate();
  return s / static_cast<double>(target_asr.size());
}

BackdoorRun run_backdoor(const DeskScenario& scenario, double lambda,
                         std::optional<int> num_targets, const SorParams* training_defense) {
  scenario.validate();
  const Dataset train_data = scenario.train_set();
  const Dataset test = scenario.test_set();

  BackdoorRun run;
  run.lambda = lambda;
  run.num_targets = num_targets.value_or(scenario.num_targets);
  run.specs = scenario.triggers(run.num_targets);

  PoisonedDataset poisoned = as_clean(train_data);
  if (lambda > 0.0) {
    std::vector<int> classes;
    for (const auto& s : run.specs) classes.push_back(s.target);
    run.plan = allocate_targets(static_cast<int>(train_data.size()), lambda, classes,
                                scenario.mode, scenario.stream(Stream::kPlan));
    poisoned = build_poisoned_dataset(train_data, make_trigger_map(run.specs), run.plan,
                                      scenario.stream(Stream::kImplant));
  }

  Dataset fit_data = poisoned.data;
  if (training_defense != nullptr) {
    fit_data = sor_filter_dataset(poisoned.data, *training_defense);
    double survived = 0.0;
    std::size_t counted = 0;
    for (const auto& a : run.plan.assignments) {
      const auto original = trigger_points(poisoned.trigger_map.at(a.target));
      survived += preprocessing_drift(original, fit_data.samples[a.sample].cloud, 1e-12);
      ++counted;
    }
    run.trigger_survival = counted == 0 ? 0.0 : survived / static_cast<double>(counted);
  }

  TrainConfig cfg = scenario.train;
  cfg.seed = scenario.stream(Stream::kTraining);
  const ValidationSplit validation{test, run.specs, scenario.stream(Stream::kEval)};
  run.training = train(fit_data, cfg, &validation);

  run.acc = evaluate_acc(run.training.model, test);
  for (const auto& spec : run.specs) {
    run.target_asr.push_back(
        evaluate_asr(run.training.model, test, spec, scenario.stream(Stream::kEval)));
  }
  run.best_sum_epoch = select_best_checkpoint(run.training.history);
  run.best_acc_epoch = select_best_acc_checkpoint(run.training.history);
  return run;
}

ReportRow backdoor_row(const std::string& experiment, const BackdoorRun& run) {
  ReportRow row;
  row.experiment = experiment;
  row.params = {{"lambda", fmt_real(run.lambda)},
                {"n", std::to_string(run.num_targets)},
                {"trigger", run.specs.empty() ? "" : std::string(to_string(run.specs[0].kind))}};
  for (const auto& r : run.target_asr) row.target_asr.push_back(r.rate());
  row.acc = run.acc.rate();
  row.aux.emplace_back("poisoned", static_cast<double>(run.plan.assignments.size()));
  const auto& h = run.training.history;
  row.aux.emplace_back("final_loss", h.back().train_loss);
  row.aux.emplace_back("best_sum_epoch", static_cast<double>(run.best_sum_epoch));
  row.aux.emplace_back("best_sum_acc", h[run.best_sum_epoch].acc.value_or(0.0));
  row.aux.emplace_back("best_sum_mean_asr", h[run.best_sum_epoch].mean_asr());
  row.aux.emplace_back("best_acc_epoch", static_cast<double>(run.best_acc_epoch));
  row.aux.emplace_back("best_acc_acc", h[run.best_acc_epoch].acc.value_or(0.0));
  row.aux.emplace_back("best_acc_mean_asr", h[run.best_acc_epoch].mean_asr());
  if (run.trigger_survival) row.aux.emplace_back("trigger_survival", *run.trigger_survival);
  return row;
}

ExperimentOutcome run_ratio_sweep(const DeskScenario& scenario,
                                  std::span<const double> lambdas) {
  if (lambdas.empty()) throw std::invalid_argument("ratio sweep: empty lambda grid");
  ExperimentOutcome out;
  const BackdoorRun control = run_backdoor(scenario, 0.0);
  out.report.rows.push_back(backdoor_row("ratio-sweep", control));
  const double prior_bound = 2.0 / static_cast<double>(scenario.data.classes.size());
  for (std::size_t t = 0; t < control.target_asr.size(); ++t) {
    if (control.target_asr[t].rate() > prior_bound) {
      out.failures.push_back("lambda=0 control ASR for target " + std::to_string(t + 1) +
                             " is " + fmt_rate(control.target_asr[t].rate()) + " > 2/C");
    }
  }
  const double baseline_acc = control.acc.rate();
  double previous = -1.0;
  for (double lambda : lambdas) {
    const BackdoorRun run = run_backdoor(scenario, lambda);
    out.report.rows.push_back(backdoor_row("ratio-sweep", run));
    const double m = run.mean_asr();
    if (previous >= 0.0 && m < previous - 0.03) {
      out.failures.push_back("mean ASR drops at lambda=" + fmt_real(lambda) + ": " +
                             fmt_rate(m) + " after " + fmt_rate(previous));
    }
    previous = m;
    if (std::abs(run.acc.rate() - baseline_acc) > scenario.acc_tolerance) {
      out.failures.push_back("ACC at lambda=" + fmt_real(lambda) + " is " +
                             fmt_rate(run.acc.rate()) + ", clean " + fmt_rate(baseline_acc));
    }
  }
  if (previous < 0.9) {
    out.failures.push_back("mean ASR at the top of the grid is " + fmt_rate(previous) +
                           " < 0.9");
  }
  out.report.notes.push_back(kAccNote);
  return out;
}

ExperimentOutcome run_sensitivity_experiment(const Classifier& classifier,
                                             const Dataset& test, const TriggerSpec& base,
                                             const SensitivityConfig& config) {
  if (config.distances.size() < 4) {
    throw std::invalid_argument("sensitivity: need at least four positions");
  }
  base.validate();
  const Vec3 origin = base.centers.front();
  const Vec3 ray = config.ray_end - origin;
  const double ray_len = std::sqrt(dot(ray, ray));
  if (!(ray_len > 0.0)) throw std::invalid_argument("sensitivity: empty ray");

  ExperimentOutcome out;
  std::vector<double> xs, ys;
  auto add_row = [&](double requested) {
    TriggerSpec moved = base;
    Vec3 shift = (requested / ray_len) * ray;
    // Clamp the first center and move every sphere by the same offset.
    Vec3 c0 = origin + shift;
    for (auto& v : c0) v = std::clamp(v, base.radius, 1.0 - base.radius);
    shift = c0 - origin;
    for (auto& c : moved.centers) c = c + shift;
    const double d = std::sqrt(dot(shift, shift));
    const double rate = asr(classifier, test, moved, config.seed);
    ReportRow row;
    row.experiment = "sensitivity";
    row.params = {{"requested_distance", fmt_real(requested)}};
    row.target_asr = {rate};
    row.aux = {{"distance", d}, {"cx", c0[0]}, {"cy", c0[1]}, {"cz", c0[2]}};
    out.report.rows.push_back(std::move(row));
    xs.push_back(d);
    ys.push_back(rate);
  };
  add_row(0.0);
  for (double d : config.distances) {
    if (!(d >= 0.0)) throw std::invalid_argument("sensitivity: negative distance");
    add_row(d);
  }

  const double baseline = ys.front();
  for (std::size_t i = 1; i < ys.size(); ++i) {
    if (ys[i] > baseline) {
      out.failures.push_back("ASR at distance " + fmt_real(xs[i]) + " exceeds the baseline");
    }
  }
  const auto rho = spearman(xs, ys);
  if (!rho) {
    out.failures.push_back("Spearman correlation undefined (constant series)");
  } else {
    out.report.notes.push_back("spearman_rho " + fmt_real(*rho));
    if (*rho > config.rho_threshold) {
      out.failures.push_back("Spearman rho " + fmt_real(*rho) + " > " +
                             fmt_real(config.rho_threshold));
    }
  }
  const std::size_t far = static_cast<std::size_t>(
      std::max_element(xs.begin(), xs.end()) - xs.begin());
  if (!(ys[far] < config.collapse_fraction * baseline)) {
    out.failures.push_back("farthest ASR " + fmt_rate(ys[far]) + " is not below " +
                           fmt_real(config.collapse_fraction) + " x baseline " +
                           fmt_rate(baseline));
  }
  return out;
}

ExperimentOutcome run_scalability_experiment(const DeskScenario& scenario,
                                             std::span<const int> n_grid,
                                             double lambda_per_target, double min_mean_asr) {
  DeskScenario per_target = scenario;
  per_target.mode = PoisonMode::kPerTarget;
  ExperimentOutcome out;

  const BackdoorRun clean = run_backdoor(per_target, 0.0, 1);
  ReportRow clean_row;
  clean_row.experiment = "scalability";
  clean_row.params = {{"lambda", fmt_real(0.0)}, {"n", "0"}};
  clean_row.acc = clean.acc.rate();
  out.report.rows.push_back(std::move(clean_row));

  for (int n : n_grid) {
    const BackdoorRun run = run_backdoor(per_target, lambda_per_target, n);
    out.report.rows.push_back(backdoor_row("scalability", run));
    if (run.mean_asr() < min_mean_asr) {
      out.failures.push_back("N=" + std::to_string(n) + " mean ASR " +
                             fmt_rate(run.mean_asr()) + " < " + fmt_real(min_mean_asr));
    }
    if (std::abs(run.acc.rate() - clean.acc.rate()) > scenario.acc_tolerance) {
      out.failures.push_back("N=" + std::to_string(n) + " ACC " + fmt_rate(run.acc.rate()) +
                             " vs clean " + fmt_rate(clean.acc.rate()));
    }
  }
  out.report.notes.push_back(kAccNote);
  return out;
}

ExperimentOutcome sor_resistance_experiment(const DeskScenario& scenario,
                                            const SorParams& params) {
  ExperimentOutcome out;
  const BackdoorRun plain = run_backdoor(scenario, scenario.lambda);
  const BackdoorRun defended = run_backdoor(scenario, scenario.lambda, std::nullopt, &params);
  auto row = backdoor_row("sor-none", plain);
  out.report.rows.push_back(std::move(row));
  row = backdoor_row("sor", defended);
  row.params.emplace_back("top_n", std::to_string(params.top_n));
  row.params.emplace_back("del_n", std::to_string(params.del_n));
  out.report.rows.push_back(std::move(row));
  return out;
}

OutlierGeometry make_outlier_geometry(int cluster_points, double extent, double offset,
                                      TriggerKind kind, int points_per_sphere,
                                      double radius, std::uint64_t seed) {
  if (cluster_points < 1) throw std::invalid_argument("outlier geometry: empty cluster");
  const Vec3 center{0.2, 0.2, 0.2};
  Rng rng(seed);
  OutlierGeometry g;
  for (int i = 0; i < cluster_points; ++i) {
    Vec3 p;
    for (int a = 0; a < 3; ++a) p[a] = center[a] + extent * (rng.uniform() - 0.5);
    g.cloud.points.push_back(p);
  }
  const double step = offset / std::sqrt(3.0);
  const Vec3 far{center[0] + step, center[1] + step, center[2] + step};
  // Dual spheres: a vertical pair 0.3 apart around the same far point.
  const TriggerSpec spec =
      kind == TriggerKind::kSingle
          ? make_single_trigger(far, 0, radius, points_per_sphere)
          : make_dual_trigger(far - Vec3{0.0, 0.0, 0.15}, far + Vec3{0.0, 0.0, 0.15}, 0,
                              radius, points_per_sphere);
  for (const auto& p : trigger_points(spec).points) {
    g.trigger_indices.push_back(g.cloud.size());
    g.cloud.points.push_back(p);
  }
  return g;
}

double sor_survival(const OutlierGeometry& geometry, const SorParams& params) {
  if (geometry.trigger_indices.empty()) return 0.0;
  const auto removed = sor_outlier_indices(geometry.cloud, params);
  std::size_t kept = 0;
  for (std::size_t idx : geometry.trigger_indices) {
    if (std::find(removed.begin(), removed.end(), idx) == removed.end()) ++kept;
  }
  return static_cast<double>(kept) / static_cast<double>(geometry.trigger_indices.size());
}

}  // namespace stone
