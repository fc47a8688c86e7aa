#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace five {

// splitmix64 finalizer; used to derive independent substreams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

// FNV-1a, 64 bit.
std::uint64_t hash_string(std::string_view text);

// Seeded random source. The engine is std::mt19937_64 (fully specified by
// the standard); the distributions are implemented here so that streams are
// reproducible across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream keyed by (seed, tags...).
  template <typename... Tags>
  static Rng substream(std::uint64_t seed, Tags... tags) {
    std::uint64_t s = seed;
    ((s = mix_seed(s, static_cast<std::uint64_t>(tags))), ...);
    return Rng(s);
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform();

  // Standard normal via Box-Muller.
  double normal();

  // Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);

  bool bernoulli(double p) { return uniform() < p; }

  // Index drawn from a discrete distribution (weights need not sum to 1).
  std::size_t categorical(const std::vector<double>& weights);

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace five
