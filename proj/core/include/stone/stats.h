#ifndef STONE_STATS_H_
#define STONE_STATS_H_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace stone {

// Round to nearest, ties to even. Every count derived from a ratio uses this.
std::int64_t round_half_even(double x);

double mean(std::span<const double> values);

// Average ranks (1-based); tied values share the mean of their ranks.
std::vector<double> average_ranks(std::span<const double> values);

// Pearson correlation; nullopt when either series has zero variance.
std::optional<double> pearson(std::span<const double> x,
                              std::span<const double> y);

// Spearman rank correlation with tie correction (Pearson on average ranks).
// nullopt ("degenerate") when either series is constant.
std::optional<double> spearman(std::span<const double> x,
                               std::span<const double> y);

}  // namespace stone

#endif  // STONE_STATS_H_
