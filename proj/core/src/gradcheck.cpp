#include "entdec/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace entdec {

template <typename S>
GradCheckReport gradcheck(const std::function<Tensor<S>()>& loss_fn,
                          std::vector<std::pair<std::string, Tensor<S>>> params,
                          const GradCheckOptions& options) {
  for (auto& [name, p] : params) {
    p.zero_grad();
  }
  loss_fn().backward();

  GradCheckReport report;
  for (auto& [name, p] : params) {
    const std::vector<S> analytic(p.grad().begin(), p.grad().end());
    auto values = p.mutable_data();
    GradCheckEntry entry{name, values.size()};
    double diff_sq = 0.0;
    double a_sq = 0.0;
    double n_sq = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const S original = values[i];
      auto at = [&](double offset) {
        values[i] = static_cast<S>(original + offset);
        return static_cast<double>(loss_fn().item());
      };
      const double h = options.step;
      const double d1 = at(h) - at(-h);
      double numeric = d1 / (2.0 * h);
      if (options.fourth_order) {
        const double d2 = at(2.0 * h) - at(-2.0 * h);
        numeric = (8.0 * d1 - d2) / (12.0 * h);
      }
      values[i] = original;
      const double a = analytic[i];
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max({std::abs(a), std::abs(numeric), options.rel_floor});
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      entry.max_rel_error = std::max(entry.max_rel_error, abs_err / denom);
      diff_sq += abs_err * abs_err;
      a_sq += a * a;
      n_sq += numeric * numeric;
    }
    const double norm_denom = std::max({std::sqrt(a_sq), std::sqrt(n_sq), options.rel_floor});
    entry.norm_rel_error = std::sqrt(diff_sq) / norm_denom;
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.max_norm_rel_error = std::max(report.max_norm_rel_error, entry.norm_rel_error);
    report.entries.push_back(std::move(entry));
  }
  const double judged = options.normwise ? report.max_norm_rel_error : report.max_rel_error;
  report.passed = judged <= options.tolerance;
  return report;
}

template GradCheckReport gradcheck(const std::function<Tensor<float>()>&,
                                   std::vector<std::pair<std::string, Tensor<float>>>,
                                   const GradCheckOptions&);
template GradCheckReport gradcheck(const std::function<Tensor<double>()>&,
                                   std::vector<std::pair<std::string, Tensor<double>>>,
                                   const GradCheckOptions&);

}  // namespace entdec
