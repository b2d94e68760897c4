#ifndef STONE_POISON_H_
#define STONE_POISON_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "stone/geometry.h"
#include "stone/trigger.h"

namespace stone {

enum class PoisonMode {
  kGlobal,     // round(lambda * H) samples in total, spread evenly over targets
  kPerTarget,  // round(lambda * H) samples for every target
};

std::string_view to_string(PoisonMode mode);
PoisonMode parse_poison_mode(std::string_view name);

struct Assignment {
  int sample = 0;
  int target = 0;  // class label of the assigned target

  bool operator==(const Assignment&) const = default;
};

struct PoisonPlan {
  double lambda = 0.0;
  PoisonMode mode = PoisonMode::kGlobal;
  std::vector<int> targets;
  std::vector<Assignment> assignments;  // ordered by sample index
  std::uint64_t seed = 0;

  // Number of assignments per entry of `targets`.
  std::vector<int> per_target_counts() const;
};

// Draws distinct sample indices uniformly and pairs them with a randomly
// permuted target list. Global mode splits round(lambda * H) as evenly as
// possible across targets (counts differ by at most one). When `labels` is
// given and exclude_target_class is set, a sample is never assigned its own
// class as target.
PoisonPlan allocate_targets(int num_samples, double lambda,
                            std::span<const int> targets, PoisonMode mode,
                            std::uint64_t seed,
                            std::span<const int> labels = {},
                            bool exclude_target_class = false);

// Plan text: `# key value` header lines then one `sample-index target` line
// per assignment.
void save_plan(const PoisonPlan& plan, const std::filesystem::path& path);
PoisonPlan load_plan(const std::filesystem::path& path);

struct PoisonedDataset {
  Dataset data;
  std::vector<char> poisoned;  // one flag per sample
  std::map<int, TriggerSpec> trigger_map;

  std::size_t poisoned_count() const;
};

// Flagged samples become implant(cloud, spec_t, mix_seed(implant_seed, i))
// relabeled to t; every other sample is copied unchanged.
PoisonedDataset build_poisoned_dataset(const Dataset& dataset,
                                       const std::map<int, TriggerSpec>& trigger_map,
                                       const PoisonPlan& plan,
                                       std::uint64_t implant_seed);

std::map<int, TriggerSpec> make_trigger_map(std::span<const TriggerSpec> specs);

// Wraps a clean dataset: no flags, no triggers.
PoisonedDataset as_clean(Dataset dataset);

}  // namespace stone

#endif  // STONE_POISON_H_
