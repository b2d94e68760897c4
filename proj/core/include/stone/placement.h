#ifndef STONE_PLACEMENT_H_
#define STONE_PLACEMENT_H_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "stone/geometry.h"
#include "stone/trigger.h"

namespace stone {

// Candidate positions for trigger centers. By default the Cartesian product
// of `levels` per axis, enumerated in lexicographic ascending order (x most
// significant). 2D grids put z = 0. A non-empty `ordered` list replaces the
// product and fixes a custom enumeration order.
struct CandidateGrid {
  int dims = 3;
  std::vector<double> levels{0.05, 0.5, 0.95};
  std::vector<Vec3> ordered{};

  void validate() const;
  std::vector<Vec3> candidates() const;
};

struct PlacementResult {
  TriggerKind kind = TriggerKind::kSingle;
  // Single: sphere centers. Dual: the 2D (x, y) anchors with z = 0.
  std::vector<Vec3> positions;
  // Dual only: the two centers of each trigger, same x and y.
  std::vector<std::array<Vec3, 2>> pairs;
  // Minimum pairwise distance over `positions`; empty when fewer than two.
  std::optional<double> achieved_min_dist;

  // One spec per position, target i for position i.
  std::vector<TriggerSpec> to_specs(std::span<const int> targets, double radius,
                                    int points_per_sphere) const;
};

inline constexpr Vec3 kSingleSeedPoint{0.95, 0.95, 0.95};
inline constexpr Vec3 kDualSeedAnchor{0.95, 0.95, 0.0};

// Exact minimum over unordered pairs; nullopt for fewer than two positions.
std::optional<double> min_pairwise_distance(std::span<const Vec3> positions);

// Greedy maximin: starts at (0.95, 0.95, 0.95), then repeatedly adds the
// candidate whose distance to the chosen set is largest. Ties go to the
// first candidate in enumeration order.
PlacementResult greedy_single_placement(int n, const CandidateGrid& grid = {});

// Greedy maximin over 2D anchors starting at (0.95, 0.95). Each anchor gets
// two distinct z values: drawn from `z_levels` under `seed`, or taken from
// `explicit_z_pairs` (one pair per anchor) when given.
PlacementResult greedy_dual_placement(
    int n, const CandidateGrid& grid2d = CandidateGrid{.dims = 2},
    std::span<const double> z_levels = {},
    std::uint64_t seed = 0,
    const std::optional<std::vector<std::pair<double, double>>>&
        explicit_z_pairs = std::nullopt);

// Exhaustive maximin over all N-subsets of the grid. Ties are broken by the
// lexicographically smallest subset in enumeration order. Throws when
// C(|grid|, N) exceeds `subset_budget`.
PlacementResult maximin_oracle(int n, const CandidateGrid& grid = {},
                               std::uint64_t subset_budget = 10'000'000);

}  // namespace stone

#endif  // STONE_PLACEMENT_H_
