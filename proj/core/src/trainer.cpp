#include "entdec/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "entdec/errors.hpp"
#include "entdec/optim.hpp"

namespace entdec {

double process_cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::size_t planned_steps(const TrainOptions& options, std::size_t n_samples) {
  if (options.max_steps > 0) {
    return options.max_steps;
  }
  const std::size_t per_epoch = (n_samples + options.batch_size - 1) / options.batch_size;
  return per_epoch * options.epochs;
}

namespace {

std::vector<Tensor<float>> param_tensors(const EntityModel<float>& model) {
  std::vector<Tensor<float>> out;
  for (auto& [name, t] : model.parameters()) {
    out.push_back(t);
  }
  return out;
}

}  // namespace

TrainResult train(EntityModel<float>& model, std::span<const EncodedSample> data, const TrainOptions& options,
                  const TrainHooks& hooks) {
  if (data.empty()) {
    throw UsageError("training set is empty");
  }
  if (options.batch_size == 0) {
    throw UsageError("batch_size must be positive");
  }
  const double cpu_start = process_cpu_seconds();
  const std::size_t total = planned_steps(options, data.size());
  std::vector<Tensor<float>> params = param_tensors(model);
  AdamState<float> adam;
  Rng rng(options.seed);
  Rng dropout_rng = rng.fork(1);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  TrainResult result;
  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  auto log_row = [&](std::size_t step, double lr) {
    TrainLogRow row;
    row.step = step;
    row.loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : 0.0;
    row.lr = lr;
    if (hooks.evaluate) {
      row.dev = hooks.evaluate(model);
    }
    result.log.push_back(row);
    if (hooks.on_eval) {
      hooks.on_eval(model, row);
    }
    loss_sum = 0.0;
    loss_count = 0;
  };

  double lr = 0.0;
  std::size_t step = 0;
  while (step < total) {
    std::vector<const EncodedSample*> batch;
    while (batch.size() < options.batch_size) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(&data[order[cursor++]]);
    }
    lr = cosine_lr(static_cast<std::int64_t>(step), static_cast<std::int64_t>(total), options.lr,
                   static_cast<std::int64_t>(std::min(options.warmup_steps, total)));
    zero_grads<float>(params);
    ForwardContext ctx{true, model.config().dropout, &dropout_rng};
    const Tensor<float> loss = model.loss(batch, ctx);
    const double value = loss.item();
    if (!std::isfinite(value)) {
      throw NumericError("training diverged at step " + std::to_string(step) + ": loss is " +
                         std::to_string(value) + " (lr " + std::to_string(lr) + ")");
    }
    loss.backward();
    if (options.clip_norm > 0.0) {
      clip_grad_norm<float>(params, options.clip_norm);
    }
    adam_step<float>(params, adam, lr);
    ++step;
    loss_sum += value;
    ++loss_count;
    result.final_loss = value;

    const bool out_of_budget =
        options.cpu_budget_seconds > 0.0 && process_cpu_seconds() - cpu_start >= options.cpu_budget_seconds;
    if ((options.eval_every > 0 && step % options.eval_every == 0) || step == total || out_of_budget) {
      log_row(step, lr);
    }
    if (out_of_budget) {
      break;
    }
  }
  result.steps = step;
  result.cpu_seconds = process_cpu_seconds() - cpu_start;
  return result;
}

double dataset_loss(const EntityModel<float>& model, std::span<const EncodedSample> data, std::size_t batch_size) {
  NoGradGuard no_grad;
  double weighted = 0.0;
  std::size_t positions = 0;
  for (std::size_t i = 0; i < data.size(); i += batch_size) {
    std::vector<const EncodedSample*> batch;
    std::size_t n = 0;
    for (std::size_t j = i; j < std::min(data.size(), i + batch_size); ++j) {
      batch.push_back(&data[j]);
      n += data[j].target.size();
    }
    ForwardContext ctx;
    weighted += static_cast<double>(model.loss(batch, ctx).item()) * static_cast<double>(n);
    positions += n;
  }
  return positions > 0 ? weighted / static_cast<double>(positions) : 0.0;
}

void write_train_log(const std::string& path, std::span<const TrainLogRow> log,
                     std::span<const std::pair<std::string, std::string>> preamble) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::filesystem::create_directories(p.parent_path());
  }
  std::ofstream out(p);
  if (!out) {
    throw DataError("cannot write " + path);
  }
  for (const auto& [k, v] : preamble) {
    out << "# " << k << '=' << v << '\n';
  }
  out << "step,loss,lr,dev_acc,dev_em\n";
  char buf[160];
  for (const auto& r : log) {
    if (r.dev) {
      std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.6f,%.6f\n", r.step, r.loss, r.lr, r.dev->acc, r.dev->em);
    } else {
      std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,,\n", r.step, r.loss, r.lr);
    }
    out << buf;
  }
}

}  // namespace entdec
