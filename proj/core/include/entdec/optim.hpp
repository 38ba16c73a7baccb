#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "entdec/tensor.hpp"

namespace entdec {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers, one per parameter, plus the step counter.
template <typename S>
struct AdamState {
  std::vector<std::vector<S>> first_moment;
  std::vector<std::vector<S>> second_moment;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update using the gradients stored on params.
/// The state is sized on first use and must keep the same parameter order.
template <typename S>
void adam_step(std::span<Tensor<S>> params, AdamState<S>& state, double lr,
               const AdamOptions& options = {});

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
template <typename S>
double clip_grad_norm(std::span<Tensor<S>> params, double max_norm);

template <typename S>
void zero_grads(std::span<Tensor<S>> params);

/// Linear warmup to base_lr over warmup_steps, then cosine decay to zero at
/// total_steps.
double cosine_lr(std::int64_t step, std::int64_t total_steps, double base_lr = 1e-4,
                 std::int64_t warmup_steps = 0);

}  // namespace entdec
