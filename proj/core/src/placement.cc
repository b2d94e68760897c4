#include "stone/placement.h"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "stone/rng.h"

namespace stone {
namespace {

constexpr std::array<double, 3> kDefaultZLevels{0.05, 0.5, 0.95};

// Exact binomial with saturation at `cap + 1`.
std::uint64_t binomial_capped(std::uint64_t n, std::uint64_t k,
                              std::uint64_t cap) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  // acc <= cap before every multiply, so acc * n stays in range for sane caps.
  std::uint64_t acc = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    acc = acc * (n - k + i) / i;
    if (acc > cap) return cap + 1;
  }
  return acc;
}

// Greedy loop shared by the single and dual placements.
std::vector<Vec3> greedy_maximin(int n, const Vec3& seed_point,
                                 const std::vector<Vec3>& candidates) {
  if (n < 1) throw std::invalid_argument("placement: N must be >= 1");
  std::vector<Vec3> chosen{seed_point};
  std::vector<char> used(candidates.size(), 0);
  std::size_t available = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i] == seed_point) {
      used[i] = 1;
    } else {
      ++available;
    }
  }
  if (static_cast<std::size_t>(n - 1) > available) {
    throw std::invalid_argument("placement: N=" + std::to_string(n) +
                                " exceeds the candidate count");
  }
  while (static_cast<int>(chosen.size()) < n) {
    std::size_t best = candidates.size();
    double best_min = -1.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (used[i]) continue;
      double min_dist = std::numeric_limits<double>::infinity();
      for (const auto& s : chosen) {
        min_dist = std::min(min_dist, distance(candidates[i], s));
      }
      if (min_dist > best_min) {
        best_min = min_dist;
        best = i;
      }
    }
    used[best] = 1;
    chosen.push_back(candidates[best]);
  }
  return chosen;
}

}  // namespace

void CandidateGrid::validate() const {
  if (dims != 2 && dims != 3) {
    throw std::invalid_argument("candidate grid must be 2D or 3D");
  }
  if (!ordered.empty()) {
    for (const auto& p : ordered) {
      for (int a = 0; a < dims; ++a) {
        if (p[a] < 0.0 || p[a] > 1.0) {
          throw std::invalid_argument("candidate outside the unit cube");
        }
      }
      if (dims == 2 && p[2] != 0.0) {
        throw std::invalid_argument("2D candidates must have z = 0");
      }
    }
    return;
  }
  if (levels.empty()) throw std::invalid_argument("candidate grid has no levels");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i] < 0.0 || levels[i] > 1.0) {
      throw std::invalid_argument("grid level outside [0, 1]");
    }
    if (i > 0 && !(levels[i] > levels[i - 1])) {
      throw std::invalid_argument("grid levels must be strictly increasing");
    }
  }
}

std::vector<Vec3> CandidateGrid::candidates() const {
  validate();
  if (!ordered.empty()) return ordered;
  std::vector<Vec3> out;
  for (double x : levels) {
    for (double y : levels) {
      if (dims == 2) {
        out.push_back({x, y, 0.0});
        continue;
      }
      for (double z : levels) out.push_back({x, y, z});
    }
  }
  return out;
}

std::vector<TriggerSpec> PlacementResult::to_specs(std::span<const int> targets,
                                                   double radius,
                                                   int points_per_sphere) const {
  const std::size_t count =
      kind == TriggerKind::kSingle ? positions.size() : pairs.size();
  if (targets.size() != count) {
    throw std::invalid_argument("need one target per placed trigger");
  }
  std::vector<TriggerSpec> specs;
  for (std::size_t i = 0; i < count; ++i) {
    specs.push_back(kind == TriggerKind::kSingle
                        ? make_single_trigger(positions[i], targets[i], radius,
                                              points_per_sphere)
                        : make_dual_trigger(pairs[i][0], pairs[i][1], targets[i],
                                            radius, points_per_sphere));
  }
  return specs;
}

std::optional<double> min_pairwise_distance(std::span<const Vec3> positions) {
  if (positions.size() < 2) return std::nullopt;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < positions.size(); ++i) {
    for (std::size_t j = i + 1; j < positions.size(); ++j) {
      best = std::min(best, distance(positions[i], positions[j]));
    }
  }
  return best;
}

PlacementResult greedy_single_placement(int n, const CandidateGrid& grid) {
  if (grid.dims != 3) throw std::invalid_argument("single placement needs a 3D grid");
  PlacementResult result;
  result.kind = TriggerKind::kSingle;
  result.positions = greedy_maximin(n, kSingleSeedPoint, grid.candidates());
  result.achieved_min_dist = min_pairwise_distance(result.positions);
  return result;
}

PlacementResult greedy_dual_placement(
    int n, const CandidateGrid& grid2d, std::span<const double> z_levels,
    std::uint64_t seed,
    const std::optional<std::vector<std::pair<double, double>>>&
        explicit_z_pairs) {
  if (grid2d.dims != 2) throw std::invalid_argument("dual placement needs a 2D grid");
  std::vector<double> zs(z_levels.begin(), z_levels.end());
  if (zs.empty()) zs.assign(kDefaultZLevels.begin(), kDefaultZLevels.end());
  std::sort(zs.begin(), zs.end());
  zs.erase(std::unique(zs.begin(), zs.end()), zs.end());
  if (zs.size() < 2) {
    throw std::invalid_argument("dual placement needs >= 2 distinct z levels");
  }
  for (double z : zs) {
    if (z < 0.0 || z > 1.0) throw std::invalid_argument("z level outside [0, 1]");
  }
  if (explicit_z_pairs && explicit_z_pairs->size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("explicit z pairs: expected " + std::to_string(n) +
                                " pairs, got " +
                                std::to_string(explicit_z_pairs->size()));
  }

  PlacementResult result;
  result.kind = TriggerKind::kDual;
  result.positions = greedy_maximin(n, kDualSeedAnchor, grid2d.candidates());
  result.achieved_min_dist = min_pairwise_distance(result.positions);

  Rng rng(seed);
  for (std::size_t i = 0; i < result.positions.size(); ++i) {
    double z1, z2;
    if (explicit_z_pairs) {
      std::tie(z1, z2) = (*explicit_z_pairs)[i];
      if (z1 == z2) throw std::invalid_argument("explicit z pair must be distinct");
      if (z1 < 0.0 || z1 > 1.0 || z2 < 0.0 || z2 > 1.0) {
        throw std::invalid_argument("explicit z pair outside [0, 1]");
      }
    } else {
      const std::size_t first = rng.below(zs.size());
      std::size_t second = rng.below(zs.size() - 1);
      if (second >= first) ++second;
      z1 = zs[first];
      z2 = zs[second];
    }
    const auto& a = result.positions[i];
    result.pairs.push_back({Vec3{a[0], a[1], z1}, Vec3{a[0], a[1], z2}});
  }
  return result;
}

PlacementResult maximin_oracle(int n, const CandidateGrid& grid,
                               std::uint64_t subset_budget) {
  if (n < 1) throw std::invalid_argument("placement: N must be >= 1");
  const auto candidates = grid.candidates();
  const std::size_t m = candidates.size();
  if (static_cast<std::size_t>(n) > m) {
    throw std::invalid_argument("placement: N exceeds the candidate count");
  }
  if (binomial_capped(m, n, subset_budget) > subset_budget) {
    throw std::invalid_argument("maximin oracle: subset budget exceeded");
  }

  std::vector<double> dist(m * m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      dist[i * m + j] = distance(candidates[i], candidates[j]);
    }
  }

  // Depth-first enumeration of index combinations in lexicographic order;
  // prefix_min[d] is the min pairwise distance of the first d chosen.
  std::vector<std::size_t> idx(n);
  std::vector<double> prefix_min(n + 1, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> best_idx;
  double best = -1.0;
  int depth = 0;
  idx[0] = 0;
  while (depth >= 0) {
    if (idx[depth] > m - static_cast<std::size_t>(n - depth)) {
      --depth;
      if (depth >= 0) ++idx[depth];
      continue;
    }
    double md = prefix_min[depth];
    for (int d = 0; d < depth; ++d) md = std::min(md, dist[idx[d] * m + idx[depth]]);
    // Subsets extending this prefix cannot beat the current best.
    if (md <= best && !(best < 0.0)) {
      ++idx[depth];
      continue;
    }
    if (depth == n - 1) {
      if (md > best) {
        best = md;
        best_idx.assign(idx.begin(), idx.end());
      }
      ++idx[depth];
      continue;
    }
    prefix_min[depth + 1] = md;
    ++depth;
    idx[depth] = idx[depth - 1] + 1;
  }

  PlacementResult result;
  result.kind = TriggerKind::kSingle;
  for (std::size_t i : best_idx) result.positions.push_back(candidates[i]);
  result.achieved_min_dist = min_pairwise_distance(result.positions);
  return result;
}

}  // namespace stone
