#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace scnn {

/// Mixes a seed with a tag into a well-separated child seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

/// Reproducible random stream. The engine (mt19937_64) is fully specified by
/// the standard; the distributions are implemented here so the draw sequence
/// does not depend on the standard library vendor.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, bound). bound must be positive.
  std::uint64_t uniform_index(std::uint64_t bound);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  /// Child stream whose seed depends on this stream's seed and the tag only,
  /// never on how many draws were taken.
  Rng fork(std::string_view tag) const { return Rng(derive_seed(seed_, tag)); }
  Rng fork(std::uint64_t tag) const { return Rng(derive_seed(seed_, tag)); }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = uniform_index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace scnn
