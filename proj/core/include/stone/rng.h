#ifndef STONE_RNG_H_
#define STONE_RNG_H_

#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace stone {

// SplitMix64 finalizer. Used to derive independent per-item seeds from a base
// seed so that results do not depend on iteration or scheduling order.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

// Seeded generator with platform-independent draws. The standard
// distributions are implementation-defined, so uniform/normal/below are
// computed from raw engine output here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal (Box-Muller; the spare value is cached).
  double normal();

  // Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);

  // k distinct indices drawn uniformly from [0, n) (partial Fisher-Yates).
  // Returned in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                      std::size_t k);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace stone

#endif  // STONE_RNG_H_
