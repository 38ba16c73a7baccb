#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "entdec/batch.hpp"
#include "entdec/model.hpp"

namespace entdec {

struct TrainOptions {
  std::size_t batch_size = 16;
  std::size_t epochs = 5;
  std::size_t max_steps = 0;  // when nonzero, overrides epochs
  double lr = 1e-3;
  std::size_t warmup_steps = 100;
  double clip_norm = 1.0;
  std::size_t eval_every = 200;
  std::uint64_t seed = 1;
  /// Stop early once this much process CPU time has been used (0 = no limit).
  double cpu_budget_seconds = 0.0;
};

struct DevMetrics {
  double acc = 0.0;
  double em = 0.0;
};

struct TrainLogRow {
  std::size_t step = 0;
  double loss = 0.0;  // mean training loss since the previous row
  double lr = 0.0;
  std::optional<DevMetrics> dev;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  std::size_t steps = 0;
  double cpu_seconds = 0.0;
  double final_loss = 0.0;
};

struct TrainHooks {
  /// Called at every eval interval and after the last step.
  std::function<DevMetrics(const EntityModel<float>&)> evaluate;
  /// Called after each logged row, e.g. to write a checkpoint.
  std::function<void(const EntityModel<float>&, const TrainLogRow&)> on_eval;
};

/// Number of optimizer steps the options imply for a training set size.
std::size_t planned_steps(const TrainOptions& options, std::size_t n_samples);

/// Adam with cosine schedule and global-norm clipping over all model
/// parameters. Batch order derives from options.seed only. Throws
/// NumericError when the loss stops being finite.
TrainResult train(EntityModel<float>& model, std::span<const EncodedSample> data, const TrainOptions& options,
                  const TrainHooks& hooks = {});

/// Mean loss over `data` in eval mode, batched like training.
double dataset_loss(const EntityModel<float>& model, std::span<const EncodedSample> data,
                    std::size_t batch_size = 16);

/// Writes step,loss,lr,dev_acc,dev_em with an optional "# key=value" preamble.
void write_train_log(const std::string& path, std::span<const TrainLogRow> log,
                     std::span<const std::pair<std::string, std::string>> preamble = {});

double process_cpu_seconds();

}  // namespace entdec
