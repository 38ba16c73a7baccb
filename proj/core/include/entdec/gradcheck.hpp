#pragma once

#include <functional>
#include <string>
#include <vector>

#include "entdec/tensor.hpp"

namespace entdec {

struct GradCheckEntry {
  std::string name;
  std::size_t numel = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  double norm_rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double max_norm_rel_error = 0.0;
  bool passed = false;
};

struct GradCheckOptions {
  double step = 1e-4;
  double tolerance = 1e-5;
  /// Denominator floor for the elementwise relative error, so entries whose
  /// true gradient is ~0 are judged on absolute error.
  double rel_floor = 1e-5;
  /// Judge on the per-tensor norm-relative error instead of the elementwise
  /// maximum (used for 32-bit checks where central differences are noisy).
  bool normwise = false;
  /// Five-point stencil (error O(h^4)) instead of the two-point one (O(h^2)).
  bool fourth_order = true;
};

/// Central-difference check of every element of `params` against the
/// gradients produced by backward() on `loss_fn()`.
template <typename S>
GradCheckReport gradcheck(const std::function<Tensor<S>()>& loss_fn,
                          std::vector<std::pair<std::string, Tensor<S>>> params,
                          const GradCheckOptions& options = {});

extern template GradCheckReport gradcheck(const std::function<Tensor<float>()>&,
                                          std::vector<std::pair<std::string, Tensor<float>>>,
                                          const GradCheckOptions&);
extern template GradCheckReport gradcheck(const std::function<Tensor<double>()>&,
                                          std::vector<std::pair<std::string, Tensor<double>>>,
                                          const GradCheckOptions&);

}  // namespace entdec
