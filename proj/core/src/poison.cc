#include "stone/poison.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "stone/rng.h"
#include "stone/stats.h"

namespace stone {

std::string_view to_string(PoisonMode mode) {
  return mode == PoisonMode::kGlobal ? "global" : "per-target";
}

PoisonMode parse_poison_mode(std::string_view name) {
  if (name == "global") return PoisonMode::kGlobal;
  if (name == "per-target") return PoisonMode::kPerTarget;
  throw std::invalid_argument("unknown poison mode '" + std::string(name) + "'");
}

std::vector<int> PoisonPlan::per_target_counts() const {
  std::vector<int> counts(targets.size(), 0);
  for (const auto& a : assignments) {
    const auto it = std::find(targets.begin(), targets.end(), a.target);
    if (it != targets.end()) ++counts[it - targets.begin()];
  }
  return counts;
}

PoisonPlan allocate_targets(int num_samples, double lambda,
                            std::span<const int> targets, PoisonMode mode,
                            std::uint64_t seed, std::span<const int> labels,
                            bool exclude_target_class) {
  if (num_samples < 1) throw std::invalid_argument("allocate_targets: H must be >= 1");
  if (!(lambda > 0.0 && lambda < 1.0)) {
    throw std::invalid_argument("allocate_targets: lambda must lie in (0, 1)");
  }
  if (targets.empty()) throw std::invalid_argument("allocate_targets: no targets");
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0) throw std::invalid_argument("allocate_targets: negative target");
    for (std::size_t j = 0; j < i; ++j) {
      if (targets[i] == targets[j]) {
        throw std::invalid_argument("allocate_targets: duplicate target");
      }
    }
  }
  if (exclude_target_class && labels.size() != static_cast<std::size_t>(num_samples)) {
    throw std::invalid_argument("allocate_targets: exclusion needs one label per sample");
  }

  const auto budget = round_half_even(lambda * num_samples);
  if (budget < 1) throw std::invalid_argument("allocate_targets: poisoning budget rounds to zero");
  const std::size_t n_targets = targets.size();
  const std::size_t total =
      mode == PoisonMode::kGlobal ? budget : budget * n_targets;
  if (total > static_cast<std::size_t>(num_samples)) {
    throw std::invalid_argument("allocate_targets: budget exceeds dataset size");
  }

  PoisonPlan plan;
  plan.lambda = lambda;
  plan.mode = mode;
  plan.targets.assign(targets.begin(), targets.end());
  plan.seed = seed;

  Rng rng(seed);
  std::vector<std::size_t> order(num_samples);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  auto allowed = [&](std::size_t sample, int target) {
    return !exclude_target_class || labels[sample] != target;
  };

  // Target multiset: global mode splits the budget as evenly as possible
  // (which targets receive the remainder is drawn at random); per-target mode
  // gives every target the full budget.
  std::vector<int> pending;
  pending.reserve(total);
  if (mode == PoisonMode::kGlobal) {
    const std::size_t base = total / n_targets;
    for (int t : plan.targets) pending.insert(pending.end(), base, t);
    for (std::size_t k : rng.sample_without_replacement(n_targets, total % n_targets)) {
      pending.push_back(plan.targets[k]);
    }
  } else {
    for (int t : plan.targets) pending.insert(pending.end(), budget, t);
  }
  rng.shuffle(pending);

  for (std::size_t sample : order) {
    if (pending.empty()) break;
    const auto it = std::find_if(pending.begin(), pending.end(),
                                 [&](int t) { return allowed(sample, t); });
    if (it == pending.end()) continue;
    plan.assignments.push_back({static_cast<int>(sample), *it});
    pending.erase(it);
  }
  if (plan.assignments.size() != total) {
    throw std::invalid_argument("allocate_targets: not enough eligible samples");
  }
  std::sort(plan.assignments.begin(), plan.assignments.end(),
            [](const Assignment& a, const Assignment& b) { return a.sample < b.sample; });
  return plan;
}

void save_plan(const PoisonPlan& plan, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", plan.lambda);
  out << "# lambda " << buf << '\n';
  out << "# mode " << to_string(plan.mode) << '\n';
  out << "# seed " << plan.seed << '\n';
  out << "# targets";
  for (int t : plan.targets) out << ' ' << t;
  out << '\n';
  for (const auto& a : plan.assignments) out << a.sample << ' ' << a.target << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

PoisonPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  PoisonPlan plan;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    if (line[0] == '#') {
      std::string hash, key;
      fields >> hash >> key;
      if (key == "lambda") {
        fields >> plan.lambda;
      } else if (key == "mode") {
        std::string mode;
        fields >> mode;
        plan.mode = parse_poison_mode(mode);
      } else if (key == "seed") {
        fields >> plan.seed;
      } else if (key == "targets") {
        int t;
        while (fields >> t) plan.targets.push_back(t);
      }
      continue;
    }
    Assignment a;
    std::string extra;
    if (!(fields >> a.sample >> a.target) || (fields >> extra) || a.sample < 0) {
      throw std::runtime_error(path.string() + ": malformed assignment at line " +
                               std::to_string(line_no));
    }
    plan.assignments.push_back(a);
  }
  if (plan.targets.empty()) {
    for (const auto& a : plan.assignments) {
      if (std::find(plan.targets.begin(), plan.targets.end(), a.target) ==
          plan.targets.end()) {
        plan.targets.push_back(a.target);
      }
    }
  }
  return plan;
}

std::size_t PoisonedDataset::poisoned_count() const {
  return static_cast<std::size_t>(std::count(poisoned.begin(), poisoned.end(), 1));
}

PoisonedDataset build_poisoned_dataset(const Dataset& dataset,
                                       const std::map<int, TriggerSpec>& trigger_map,
                                       const PoisonPlan& plan,
                                       std::uint64_t implant_seed) {
  dataset.validate();
  PoisonedDataset out;
  out.data = dataset;
  out.poisoned.assign(dataset.size(), 0);
  out.trigger_map = trigger_map;
  for (const auto& a : plan.assignments) {
    if (a.sample < 0 || static_cast<std::size_t>(a.sample) >= dataset.size()) {
      throw std::invalid_argument("plan refers to sample " + std::to_string(a.sample) +
                                  " outside the dataset");
    }
    if (out.poisoned[a.sample]) {
      throw std::invalid_argument("plan assigns sample " + std::to_string(a.sample) +
                                  " twice");
    }
    const auto it = trigger_map.find(a.target);
    if (it == trigger_map.end()) {
      throw std::invalid_argument("no trigger for target " + std::to_string(a.target));
    }
    if (a.target >= dataset.num_classes) {
      throw std::invalid_argument("target " + std::to_string(a.target) +
                                  " outside the class range");
    }
    auto& sample = out.data.samples[a.sample];
    try {
      sample.cloud = implant(sample.cloud, it->second,
                             mix_seed(implant_seed, static_cast<std::uint64_t>(a.sample)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("sample " + std::to_string(a.sample) + ": " + e.what());
    }
    sample.label = a.target;
    out.poisoned[a.sample] = 1;
  }
  return out;
}

std::map<int, TriggerSpec> make_trigger_map(std::span<const TriggerSpec> specs) {
  std::map<int, TriggerSpec> out;
  for (const auto& s : specs) {
    if (!out.emplace(s.target, s).second) {
      throw std::invalid_argument("two triggers map to target " + std::to_string(s.target));
    }
  }
  return out;
}

PoisonedDataset as_clean(Dataset dataset) {
  PoisonedDataset out;
  out.poisoned.assign(dataset.size(), 0);
  out.data = std::move(dataset);
  return out;
}

}  // namespace stone
