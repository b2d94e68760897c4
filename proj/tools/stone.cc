// stone: command-line front end for the trigger/poison/defense/train/eval
// pipeline and the desk-scale experiments.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stone/config.h"
#include "stone/defense.h"
#include "stone/experiments.h"
#include "stone/geometry.h"
#include "stone/harness.h"
#include "stone/model.h"
#include "stone/placement.h"
#include "stone/poison.h"
#include "stone/rng.h"
#include "stone/surrogate.h"
#include "stone/trigger.h"

namespace fs = std::filesystem;
using namespace stone;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitAssertion = 2;

struct Globals {
  std::uint64_t seed = 1;
  std::string config_path;
  std::string out_dir = ".";
  Config config;

  fs::path out(const std::string& name) const { return fs::path(out_dir) / name; }
};

// Implant seed shared by `poison` and `train`, so both rebuild the same
// poisoned clouds from a plan.
std::uint64_t implant_seed(const PoisonPlan& plan) { return mix_seed(plan.seed, 0x1a); }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Dataset load_or_synth(const Globals& g, const std::string& manifest, bool test_split) {
  if (!manifest.empty()) return load_manifest(manifest);
  const DeskScenario s = DeskScenario::from_config(g.config, g.seed);
  return test_split ? s.test_set() : s.train_set();
}

TrainConfig train_config(const Globals& g) {
  TrainConfig c;
  c.epochs = static_cast<int>(g.config.get_int("epochs", c.epochs));
  c.batch_size = static_cast<int>(g.config.get_int("batch_size", c.batch_size));
  c.learning_rate = g.config.get_double("learning_rate", c.learning_rate);
  c.seed = mix_seed(g.seed, static_cast<std::uint64_t>(Stream::kTraining));
  return c;
}

int cmd_synth(const Globals& g, bool test_split) {
  const Dataset d = load_or_synth(g, "", test_split);
  const auto manifest = save_dataset(d, g.out_dir);
  std::cout << "wrote " << d.size() << " clouds, manifest " << manifest.string() << '\n';
  return kExitOk;
}

int cmd_place(const Globals& g, int n, const std::string& kind_name, double radius,
              int points, std::vector<int> targets, bool oracle) {
  const TriggerKind kind = parse_trigger_kind(kind_name);
  if (targets.empty()) {
    for (int i = 0; i < n; ++i) targets.push_back(i);
  }
  if (static_cast<int>(targets.size()) != n) {
    throw std::invalid_argument("place: need exactly N target classes");
  }
  const PlacementResult r =
      kind == TriggerKind::kSingle
          ? greedy_single_placement(n)
          : greedy_dual_placement(n, CandidateGrid{.dims = 2}, {},
                                  mix_seed(g.seed, static_cast<std::uint64_t>(Stream::kDualZ)));
  save_trigger_specs(r.to_specs(targets, radius, points), g.out("triggers.txt"));

  std::string csv = "index,target,x,y,z\n";
  const auto specs = r.to_specs(targets, radius, points);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    for (const auto& c : specs[i].centers) {
      csv += std::to_string(i) + "," + std::to_string(specs[i].target) + "," + fmt(c[0]) +
             "," + fmt(c[1]) + "," + fmt(c[2]) + "\n";
    }
  }
  if (r.achieved_min_dist) csv += "# min_pairwise_distance " + fmt(*r.achieved_min_dist) + "\n";
  int status = kExitOk;
  if (oracle && kind == TriggerKind::kSingle && n >= 2) {
    const auto best = maximin_oracle(n);
    csv += "# oracle_min_pairwise_distance " + fmt(*best.achieved_min_dist) + "\n";
    if (std::abs(*best.achieved_min_dist - *r.achieved_min_dist) > 1e-9) {
      std::cerr << "greedy placement is not maximin-optimal on the grid\n";
      status = kExitAssertion;
    }
  }
  write_text(g.out("placement.csv"), csv);
  std::cout << "placed " << n << " " << kind_name << " triggers";
  if (r.achieved_min_dist) std::cout << ", min distance " << fmt(*r.achieved_min_dist);
  std::cout << '\n';
  return status;
}

int cmd_poison(const Globals& g, const std::string& manifest, const std::string& triggers,
               double lambda, const std::string& mode, bool exclude_own_class) {
  const Dataset d = load_or_synth(g, manifest, false);
  const auto specs = load_trigger_specs(triggers);
  std::vector<int> targets, labels;
  for (const auto& s : specs) targets.push_back(s.target);
  for (const auto& s : d.samples) labels.push_back(s.label);
  const PoisonPlan plan =
      allocate_targets(static_cast<int>(d.size()), lambda, targets, parse_poison_mode(mode),
                       mix_seed(g.seed, static_cast<std::uint64_t>(Stream::kPlan)), labels,
                       exclude_own_class);
  save_plan(plan, g.out("plan.txt"));
  const PoisonedDataset p = build_poisoned_dataset(d, make_trigger_map(specs), plan,
                                                   implant_seed(plan));
  save_dataset(p.data, g.out("poisoned"));
  std::cout << "poisoned " << plan.assignments.size() << " of " << d.size() << " samples\n";
  return kExitOk;
}

int cmd_defend(const Globals& g, const std::string& manifest, int top_n, int del_n,
               const std::string& triggers, const std::string& plan_path) {
  const SorParams params{top_n, del_n};
  const Dataset d = load_or_synth(g, manifest, false);
  const Dataset filtered = sor_filter_dataset(d, params);
  save_dataset(filtered, g.out("filtered"));
  std::string csv = "top_n,del_n,samples";
  std::optional<double> survival;
  if (!triggers.empty() && !plan_path.empty()) {
    // `manifest` is the clean set; survival is measured on the poisoned copies.
    const auto specs = load_trigger_specs(triggers);
    const auto map = make_trigger_map(specs);
    const PoisonPlan plan = load_plan(plan_path);
    const PoisonedDataset p = build_poisoned_dataset(d, map, plan, implant_seed(plan));
    double total = 0.0;
    for (const auto& a : plan.assignments) {
      total += preprocessing_drift(trigger_points(map.at(a.target)),
                                   sor_filter(p.data.samples[a.sample].cloud, params), 1e-12);
    }
    survival = plan.assignments.empty() ? 0.0 : total / plan.assignments.size();
    csv += ",trigger_survival";
  }
  csv += "\n" + std::to_string(top_n) + "," + std::to_string(del_n) + "," +
         std::to_string(d.size());
  if (survival) csv += "," + fmt(*survival);
  write_text(g.out("sor.csv"), csv + "\n");
  std::cout << "filtered " << d.size() << " clouds";
  if (survival) std::cout << ", trigger survival " << fmt(*survival);
  std::cout << '\n';
  return kExitOk;
}

int cmd_train(const Globals& g, const std::string& manifest, const std::string& plan_path,
              const std::string& triggers, const std::string& val_manifest) {
  const Dataset d = load_or_synth(g, manifest, false);
  std::vector<TriggerSpec> specs;
  if (!triggers.empty()) specs = load_trigger_specs(triggers);
  PoisonedDataset data = as_clean(d);
  if (!plan_path.empty()) {
    if (specs.empty()) throw std::invalid_argument("train: --plan needs --triggers");
    const PoisonPlan plan = load_plan(plan_path);
    data = build_poisoned_dataset(d, make_trigger_map(specs), plan, implant_seed(plan));
  }
  std::optional<ValidationSplit> val;
  if (!val_manifest.empty() || manifest.empty()) {
    val = ValidationSplit{load_or_synth(g, val_manifest, true), specs,
                          mix_seed(g.seed, static_cast<std::uint64_t>(Stream::kEval))};
  }
  const TrainResult r = train(data, train_config(g), val ? &*val : nullptr);
  r.model.save(g.out("model.bin"));

  std::string csv = "epoch,loss,acc";
  for (std::size_t t = 0; t < specs.size(); ++t) csv += ",asr_t" + std::to_string(t + 1);
  csv += ",mean_asr\n";
  for (const auto& e : r.history) {
    csv += std::to_string(e.epoch) + "," + fmt(e.train_loss) + ",";
    if (e.acc) csv += fmt(*e.acc);
    for (std::size_t t = 0; t < specs.size(); ++t) {
      csv += ",";
      if (t < e.target_asr.size()) csv += fmt(e.target_asr[t]);
    }
    csv += "," + fmt(e.mean_asr()) + "\n";
  }
  if (val) {
    csv += "# best_sum_epoch " + std::to_string(select_best_checkpoint(r.history)) + "\n";
    csv += "# best_acc_epoch " + std::to_string(select_best_acc_checkpoint(r.history)) + "\n";
  }
  write_text(g.out("metrics.csv"), csv);
  std::cout << "trained " << r.history.size() << " epochs, final loss "
            << fmt(r.history.back().train_loss) << '\n';
  return kExitOk;
}

int cmd_eval(const Globals& g, const std::string& model_path, const std::string& manifest,
             const std::string& triggers) {
  const MiniPointModel model = MiniPointModel::load(model_path);
  const Dataset test = load_or_synth(g, manifest, true);
  const std::uint64_t seed = mix_seed(g.seed, static_cast<std::uint64_t>(Stream::kEval));
  ExperimentReport report;
  ReportRow row;
  row.experiment = "eval";
  const RateResult acc_result = evaluate_acc(model, test);
  emit_prediction_log(acc_result, g.out("predictions_acc.txt"));
  row.acc = acc_result.rate();
  if (!triggers.empty()) {
    const auto specs = load_trigger_specs(triggers);
    for (std::size_t t = 0; t < specs.size(); ++t) {
      const RateResult r = evaluate_asr(model, test, specs[t], seed);
      emit_prediction_log(r, g.out("predictions_asr_t" + std::to_string(t + 1) + ".txt"));
      row.target_asr.push_back(r.rate());
    }
  }
  report.rows.push_back(std::move(row));
  emit_report(report, g.out("eval.csv"));
  std::cout << report_to_csv(report);
  return kExitOk;
}

SurrogateScenario surrogate_scenario(const Globals& g) {
  SurrogateScenario s = SurrogateScenario::defaults();
  const Config& c = g.config;
  s.seed = g.seed;
  s.data.seed = mix_seed(g.seed, static_cast<std::uint64_t>(Stream::kTrainData));
  s.data.samples_per_class =
      static_cast<int>(c.get_int("samples_per_class", s.data.samples_per_class));
  s.data.num_points = static_cast<int>(c.get_int("num_points", s.data.num_points));
  s.data.jitter = c.get_double("jitter", s.data.jitter);
  s.heldout_per_class = static_cast<int>(c.get_int("heldout_per_class", s.heldout_per_class));
  s.lambda = c.get_double("lambda", s.lambda);
  s.target = static_cast<int>(c.get_int("target", s.target));
  auto vec = [&](const char* key, Vec3 fallback) {
    const auto v = c.get_doubles(key, {fallback[0], fallback[1], fallback[2]});
    if (v.size() != 3) throw std::invalid_argument(std::string(key) + " needs 3 values");
    return Vec3{v[0], v[1], v[2]};
  };
  s.r0 = vec("r0", s.r0);
  s.r1 = vec("r1", s.r1);
  s.ray_end = vec("ray_end", s.ray_end);
  s.radius = c.get_double("radius", s.radius);
  s.trigger_fraction = c.get_double("trigger_fraction", s.trigger_fraction);
  s.calibration_kernel = c.get_double("calibration_kernel", s.calibration_kernel);
  s.features.gamma = c.get_double("gamma", s.features.gamma);
  s.features.voxel_resolution =
      static_cast<int>(c.get_int("voxel_resolution", s.features.voxel_resolution));
  s.features.smoothing = c.get_double("smoothing", s.features.smoothing);
  return s;
}

int cmd_ntk_validate(const Globals& g) {
  const SurrogateScenario s = surrogate_scenario(g);
  const auto distances =
      g.config.get_doubles("distances", {0.0, 0.1, 0.3, 0.5, 0.7, 0.9 * std::sqrt(3.0)});
  const SpecificityReport spec = validate_spatial_specificity(s);
  const SensitivityReport sens = validate_spatial_sensitivity(s, distances);

  std::string csv = "distance,mean_phi,A,B,C,epsilon\n";
  std::vector<std::pair<double, double>> curve;
  for (const auto& p : sens.points) {
    csv += fmt(p.distance) + "," + fmt(p.mean_phi) + "," + fmt(p.mean_A) + "," + fmt(p.mean_B) +
           "," + fmt(p.mean_C) + "," + fmt(p.epsilon) + "\n";
    curve.emplace_back(p.distance, p.mean_phi);
  }
  csv += "# gamma " + fmt(sens.gamma) + "\n";
  csv += "# baseline_a_over_c " + fmt(sens.baseline_a_over_c) + "\n";
  csv += "# spearman_rho " + (sens.spearman_rho ? fmt(*sens.spearman_rho) : "degenerate") + "\n";
  if (sens.fit) {
    csv += "# fit_asymptote " + fmt(sens.fit->asymptote) + "\n";
    csv += "# fit_r_squared " + fmt(sens.fit->r_squared) + "\n";
  }
  write_text(g.out("ntk_sensitivity.csv"), csv);
  emit_curve_block("mean phi vs distance", curve, g.out("ntk_sensitivity.dat"));

  const double margin = spec.mean_phi_r0 - spec.mean_phi_r1;
  write_text(g.out("ntk_specificity.csv"),
             "mean_phi_r0,mean_phi_r1,margin,epsilon,baseline_a_over_c,gamma,queries\n" +
                 fmt(spec.mean_phi_r0) + "," + fmt(spec.mean_phi_r1) + "," + fmt(margin) + "," +
                 fmt(spec.epsilon) + "," + fmt(spec.baseline_a_over_c) + "," +
                 fmt(spec.gamma) + "," + std::to_string(spec.queries) + "\n");

  std::vector<std::string> failures;
  if (!spec.holds()) failures.push_back("specificity: phi(R1) >= phi(R0)");
  if (!(spec.epsilon < 1.0) && distance(s.r0, s.r1) > 0.0) {
    failures.push_back("specificity: epsilon >= 1");
  }
  if (!sens.spearman_rho) {
    failures.push_back("sensitivity: degenerate series");
  } else if (*sens.spearman_rho > -0.9) {
    failures.push_back("sensitivity: Spearman rho " + fmt(*sens.spearman_rho) + " > -0.9");
  }
  for (const auto& f : failures) std::cerr << "check failed: " << f << '\n';
  std::cout << "phi(R0) " << fmt(spec.mean_phi_r0) << ", phi(R1) " << fmt(spec.mean_phi_r1)
            << ", epsilon " << fmt(spec.epsilon) << '\n';
  return failures.empty() ? kExitOk : kExitAssertion;
}

int finish(const ExperimentOutcome& outcome, const fs::path& path) {
  emit_report(outcome.report, path);
  for (const auto& f : outcome.failures) std::cerr << "check failed: " << f << '\n';
  std::cout << "wrote " << path.string() << '\n';
  return outcome.passed() ? kExitOk : kExitAssertion;
}

int cmd_sweep(const Globals& g, const std::string& experiment) {
  const DeskScenario s = DeskScenario::from_config(g.config, g.seed);
  if (experiment == "ratio") {
    const auto lambdas = g.config.get_doubles("lambdas", {0.02, 0.04});
    return finish(run_ratio_sweep(s, lambdas), g.out("ratio_sweep.csv"));
  }
  if (experiment == "scalability") {
    std::vector<int> ns;
    for (auto n : g.config.get_ints("n_grid", {1, 2, 3, 4})) ns.push_back(static_cast<int>(n));
    const double per_target = g.config.get_double("lambda_per_target", 0.01);
    return finish(run_scalability_experiment(s, ns, per_target),
                  g.out("scalability.csv"));
  }
  if (experiment == "sensitivity") {
    const BackdoorRun run = run_backdoor(s, s.lambda);
    SensitivityConfig sc;
    sc.distances = g.config.get_doubles("distances", sc.distances);
    const auto end = g.config.get_doubles("ray_end", {sc.ray_end[0], sc.ray_end[1], sc.ray_end[2]});
    if (end.size() != 3) throw std::invalid_argument("ray_end needs 3 values");
    sc.ray_end = {end[0], end[1], end[2]};
    sc.seed = s.stream(Stream::kEval);
    const ExperimentOutcome out =
        run_sensitivity_experiment(run.training.model, s.test_set(), run.specs.front(), sc);
    std::vector<std::pair<double, double>> curve;
    for (const auto& row : out.report.rows) curve.emplace_back(row.aux[0].second, row.target_asr[0]);
    emit_curve_block("ASR vs relocation distance", curve, g.out("sensitivity.dat"));
    return finish(out, g.out("sensitivity.csv"));
  }
  if (experiment == "sor") {
    const SorParams params{static_cast<int>(g.config.get_int("top_n", 15)),
                           static_cast<int>(g.config.get_int("del_n", 8))};
    return finish(sor_resistance_experiment(s, params), g.out("sor.csv"));
  }
  throw std::invalid_argument("unknown experiment '" + experiment +
                              "' (ratio, scalability, sensitivity, sor)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stone: one-to-N spherical-trigger backdoor laboratory"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "master seed")->capture_default_str();
  app.add_option("--config", g.config_path, "key = value config file");
  app.add_option("--out", g.out_dir, "output directory")->capture_default_str();
  app.fallthrough();

  std::function<int()> action;

  auto* synth = app.add_subcommand("synth", "write the synthetic train or test split");
  bool synth_test = false;
  synth->add_flag("--test", synth_test, "write the test split");
  synth->callback([&] { action = [&] { return cmd_synth(g, synth_test); }; });

  auto* place = app.add_subcommand("place", "greedy maximin trigger placement");
  int place_n = 4, place_points = 10;
  std::string place_kind = "single";
  double place_radius = 0.05;
  std::vector<int> place_targets;
  bool place_oracle = false;
  place->add_option("-n,--n", place_n, "number of triggers")->capture_default_str();
  place->add_option("--kind", place_kind, "single or dual")->capture_default_str();
  place->add_option("--radius", place_radius)->capture_default_str();
  place->add_option("--points", place_points, "points per sphere")->capture_default_str();
  place->add_option("--targets", place_targets, "target class per trigger");
  place->add_flag("--oracle", place_oracle, "verify optimality by exhaustive search");
  place->callback([&] {
    action = [&] {
      return cmd_place(g, place_n, place_kind, place_radius, place_points, place_targets,
                       place_oracle);
    };
  });

  auto* poison = app.add_subcommand("poison", "allocate targets and implant triggers");
  std::string poison_manifest, poison_triggers, poison_mode = "global";
  double poison_lambda = 0.01;
  bool poison_exclude = false;
  poison->add_option("--manifest", poison_manifest, "clean dataset (default: synthetic)");
  poison->add_option("--triggers", poison_triggers, "trigger spec file")->required();
  poison->add_option("--lambda", poison_lambda)->capture_default_str();
  poison->add_option("--mode", poison_mode, "global or per-target")->capture_default_str();
  poison->add_flag("--exclude-own-class", poison_exclude,
                   "never poison a sample towards its own class");
  poison->callback([&] {
    action = [&] {
      return cmd_poison(g, poison_manifest, poison_triggers, poison_lambda, poison_mode,
                        poison_exclude);
    };
  });

  auto* defend = app.add_subcommand("defend", "statistical outlier removal");
  std::string defend_manifest, defend_triggers, defend_plan;
  int top_n = 15, del_n = 8;
  defend->add_option("--manifest", defend_manifest, "dataset (default: synthetic)");
  defend->add_option("--top-n", top_n)->capture_default_str();
  defend->add_option("--del-n", del_n)->capture_default_str();
  defend->add_option("--triggers", defend_triggers, "trigger specs, for survival");
  defend->add_option("--plan", defend_plan, "poison plan, for survival");
  defend->callback([&] {
    action = [&] {
      return cmd_defend(g, defend_manifest, top_n, del_n, defend_triggers, defend_plan);
    };
  });

  auto* trn = app.add_subcommand("train", "train the mini point model");
  std::string train_manifest, train_plan, train_triggers, train_val;
  trn->add_option("--manifest", train_manifest, "clean training set (default: synthetic)");
  trn->add_option("--plan", train_plan, "poison plan");
  trn->add_option("--triggers", train_triggers, "trigger specs");
  trn->add_option("--val", train_val, "validation manifest");
  trn->callback([&] {
    action = [&] { return cmd_train(g, train_manifest, train_plan, train_triggers, train_val); };
  });

  auto* evl = app.add_subcommand("eval", "ACC and per-target ASR of a saved model");
  std::string eval_model, eval_manifest, eval_triggers;
  evl->add_option("--model", eval_model)->required();
  evl->add_option("--manifest", eval_manifest, "test set (default: synthetic)");
  evl->add_option("--triggers", eval_triggers, "trigger specs");
  evl->callback([&] {
    action = [&] { return cmd_eval(g, eval_model, eval_manifest, eval_triggers); };
  });

  auto* ntk = app.add_subcommand("ntk-validate", "kernel surrogate specificity and decay");
  ntk->callback([&] { action = [&] { return cmd_ntk_validate(g); }; });

  auto* sweep = app.add_subcommand("sweep", "desk-scale experiments");
  std::string experiment = "ratio";
  sweep->add_option("--experiment", experiment, "ratio, scalability, sensitivity or sor")
      ->capture_default_str();
  sweep->callback([&] { action = [&] { return cmd_sweep(g, experiment); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (!g.config_path.empty()) g.config = Config::load(g.config_path);
    fs::create_directories(g.out_dir);
    return action();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
}
