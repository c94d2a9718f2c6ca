#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace layerstitch {

// Explicit random stream. Wraps std::mt19937_64 (whose output sequence is
// fixed by the standard) with hand-written distributions so that draws are
// identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64() { return engine_(); }
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);
  // Uniform real in [0, 1) with 53 random bits.
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  double normal();
  bool coin() { return (next_u64() >> 63) != 0; }

  // Independent child stream; deterministic in the parent state.
  Rng split();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  // Sorted k-subset of {0, ..., n-1}, uniform over all C(n, k) subsets.
  std::vector<std::size_t> subset(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace layerstitch
