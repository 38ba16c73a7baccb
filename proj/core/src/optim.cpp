#include "entdec/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "entdec/errors.hpp"

namespace entdec {

template <typename S>
void adam_step(std::span<Tensor<S>> params, AdamState<S>& state, double lr, const AdamOptions& options) {
  if (state.first_moment.empty()) {
    state.first_moment.resize(params.size());
    state.second_moment.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.first_moment[i].assign(params[i].numel(), S{0});
      state.second_moment[i].assign(params[i].numel(), S{0});
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw UsageError("adam_step: parameter list changed between steps");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(options.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(options.beta2, static_cast<double>(state.step));
  const S b1 = static_cast<S>(options.beta1);
  const S b2 = static_cast<S>(options.beta2);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    if (m.size() != params[p].numel()) {
      throw UsageError("adam_step: parameter shape changed between steps");
    }
    auto values = params[p].mutable_data();
    auto grads = params[p].grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const S g = grads[i];
      m[i] = b1 * m[i] + (S{1} - b1) * g;
      v[i] = b2 * v[i] + (S{1} - b2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      values[i] -= static_cast<S>(lr * m_hat / (std::sqrt(v_hat) + options.eps));
    }
  }
}

template <typename S>
double clip_grad_norm(std::span<Tensor<S>> params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params) {
    for (S g : p.grad()) {
      sq += static_cast<double>(g) * g;
    }
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const S factor = static_cast<S>(max_norm / norm);
    for (auto& p : params) {
      for (S& g : p.mutable_grad()) {
        g *= factor;
      }
    }
  }
  return norm;
}

template <typename S>
void zero_grads(std::span<Tensor<S>> params) {
  for (auto& p : params) {
    p.zero_grad();
  }
}

double cosine_lr(std::int64_t step, std::int64_t total_steps, double base_lr, std::int64_t warmup_steps) {
  if (step < 0 || total_steps < 0 || step > total_steps) {
    throw UsageError("cosine_lr: step must lie in [0, total_steps]");
  }
  if (warmup_steps > 0 && step < warmup_steps) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  if (total_steps <= warmup_steps) {
    return base_lr;
  }
  const double progress =
      static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

template void adam_step(std::span<Tensor<float>>, AdamState<float>&, double, const AdamOptions&);
template void adam_step(std::span<Tensor<double>>, AdamState<double>&, double, const AdamOptions&);
template double clip_grad_norm(std::span<Tensor<float>>, double);
template double clip_grad_norm(std::span<Tensor<double>>, double);
template void zero_grads(std::span<Tensor<float>>);
template void zero_grads(std::span<Tensor<double>>);

}  // namespace entdec
