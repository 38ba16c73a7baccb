#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>

namespace entdec {

/// Portable seedable generator: xoshiro256** (Blackman & Vigna) with its
/// state expanded from a 64-bit seed by splitmix64.
///
/// Every derived quantity (uniform doubles, bounded integers, normals) is
/// computed here rather than through <random> distributions, whose output is
/// implementation-defined. Two platforms given the same seed therefore draw
/// identical datasets and initial weights.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) noexcept { reseed(seed); }

  void reseed(std::uint64_t seed) noexcept;

  std::uint64_t next_u64() noexcept;

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept;

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept;

  /// Unbiased integer in [lo, hi] (inclusive).
  std::int64_t range(std::int64_t lo, std::int64_t hi) noexcept;

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() noexcept;

  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Independent generator for a named sub-stream, derived without
  /// advancing this one.
  [[nodiscard]] Rng fork(std::uint64_t stream) const noexcept;

  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  template <typename Container>
  void shuffle(Container& c) noexcept {
    shuffle(std::span{c.data(), c.size()});
  }

  template <typename Container>
  const auto& pick(const Container& c) noexcept {
    return c[static_cast<std::size_t>(below(c.size()))];
  }

 private:
  std::uint64_t s_[4]{};
  std::uint64_t seed_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state) noexcept;

}  // namespace entdec
