#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "entdec/config.hpp"

namespace entdec {

struct BenchPoint {
  std::string method;  // "dynamic_vocab" or "append"
  std::size_t n = 0;
  std::size_t T = 0;
  std::size_t L = 0;
  std::size_t N = 0;
  double seconds = 0.0;  // median wall time per decoded sample
  std::size_t trials = 0;
  std::size_t reps = 1;  // decodes per timed trial
};

struct BenchGrid {
  std::vector<std::size_t> n{8, 16, 32, 64, 128};
  std::size_t T = 64;
  std::size_t L = 32;
  std::size_t N = 32;
  std::size_t warmups = 2;
  std::size_t trials = 5;
  std::uint64_t seed = 1;

  void validate() const;
};

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Least squares of log(y) on log(x). Needs two distinct positive x.
LineFit fit_loglog(std::span<const double> x, std::span<const double> y);

/// Slope over the upper half of the grid (points with n at or above the
/// median n) for one method.
double upper_half_slope(std::span<const BenchPoint> points, const std::string& method);

/// Fits exact c*n and c*n^2 data; true when both slopes land within tol.
bool fitter_self_test(double tol = 0.05);

/// Number of adjacent pairs (by n) whose median time decreases.
std::size_t count_inversions(std::span<const BenchPoint> points, const std::string& method);

/// Smallest nonzero step of the wall clock, in seconds.
double timer_resolution();

/// Median seconds per call of `fn` over `trials` timed trials after
/// `warmups` discarded calls. Each trial repeats fn until the interval is at
/// least 20x the timer resolution; `reps` receives the repeat count.
double time_median(const std::function<void()>& fn, std::size_t warmups, std::size_t trials, std::size_t& reps);

struct BenchResult {
  std::vector<BenchPoint> points;
  double dynamic_slope = 0.0;
  double append_slope = 0.0;
  bool fitter_ok = false;
  std::vector<std::string> flags;  // monotonicity complaints
};

/// Times forced greedy decoding of N tokens for random inputs of T tokens
/// and n entities with L-token descriptions. The dynamic model encodes the
/// entities with the retriever; the append method feeds the same generator
/// weights x + "| name : description" for every entity. Weights are random.
BenchResult bench_scaling(const ModelConfig& model, const BenchGrid& grid);

void write_bench_csv(const std::filesystem::path& path, const BenchResult& result,
                     const std::vector<std::pair<std::string, std::string>>& preamble = {});

}  // namespace entdec
