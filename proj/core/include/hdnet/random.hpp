#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace hdnet {

/// Derives an independent child seed; used so every stochastic consumer
/// (shuffling, noise, init, sampling) gets its own stream from one run seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) noexcept;

/// Seeded generator with platform-stable draws. All distributions are
/// computed here rather than through <random> distributions, whose output
/// is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Requires n > 0.
  std::size_t below(std::size_t n);

  /// Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Standard Gumbel(0, 1): -log(-log(u)).
  double gumbel();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace hdnet
