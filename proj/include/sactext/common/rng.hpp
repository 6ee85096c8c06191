#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace sactext {

std::uint64_t splitmix64(std::uint64_t x);

/// Seed for stream `stream` of a master seed. Used to split one run seed into per-env streams.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// Portable random source. The engine is mt19937_64 (fully specified by the standard); the
/// distributions are implemented here because the std:: ones are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Draw from a categorical distribution given by (not necessarily normalized) weights.
  std::size_t categorical(std::span<const double> weights);

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sactext
