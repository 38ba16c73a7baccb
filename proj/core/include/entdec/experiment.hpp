#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "entdec/baselines.hpp"
#include "entdec/batch.hpp"
#include "entdec/config.hpp"
#include "entdec/decoding.hpp"
#include "entdec/kvconfig.hpp"
#include "entdec/model.hpp"
#include "entdec/tasks.hpp"
#include "entdec/trainer.hpp"

namespace entdec {

/// Everything that determines a run. One seed drives data generation,
/// splitting, initialization and batch order.
struct RunConfig {
  TaskConfig task;
  ModelConfig model;
  TrainOptions train;
  std::uint64_t seed = 1;
  BaselineKind baseline = BaselineKind::none;
  std::size_t k = 7;
  DecodeOptions decode;
  bool separate_training = false;  // generator first on entity names, then joint
  std::size_t dev_eval_samples = 200;
  std::string out_dir = "out";

  KeyValues to_map() const;
  /// Starts from defaults; unknown keys raise UsageError.
  static RunConfig from_map(const KeyValues& kv);
  /// Applies one key; returns false for unknown keys.
  bool set(const std::string& key, const std::string& value);
};

struct TaskData {
  Dataset all;
  DataSplit split;
  Vocabulary vocab;
};

TaskData prepare_task(const TaskConfig& task, std::uint64_t split_seed);

EncodeOptions dynamic_encode_options(const ModelConfig& model);
/// Baseline generators see no entities and emit names token by token.
EncodeOptions append_encode_options(const ModelConfig& model);

/// Per-sample evaluation outcome.
struct EvalRecord {
  std::string sample_id;
  std::string method;
  std::size_t gold_count = 0;
  double acc = std::numeric_limits<double>::quiet_NaN();  // NaN when the gold set is empty
  double em = 0.0;
  double chrf = 0.0;
  std::string output;
  std::vector<std::size_t> predicted;
  bool truncated = false;
  double score = 0.0;
};

/// Decodes each sample with the dynamic-vocabulary model. `limit` caps the
/// number of samples (0 = all).
std::vector<EvalRecord> evaluate_dynamic(const EntityModel<float>& model, const Vocabulary& vocab,
                                         std::span<const Sample> samples, const DecodeOptions& options,
                                         const std::string& method, std::size_t limit = 0);

/// Rewrites samples for a baseline. `selections` (one list per sample) is
/// required for our_retrieval.
std::vector<BaselineInput> baseline_inputs(std::span<const Sample> samples, BaselineKind kind, std::size_t k,
                                           std::span<const std::vector<std::size_t>> selections,
                                           std::size_t max_input_tokens);

/// Decodes baseline inputs with a generator-only model; predicted entities
/// are recovered from the output text by whole-token name matching against
/// all of the original sample's entities.
std::vector<EvalRecord> evaluate_append(const EntityModel<float>& model, const Vocabulary& vocab,
                                        std::span<const Sample> originals, std::span<const BaselineInput> inputs,
                                        const DecodeOptions& options, const std::string& method,
                                        std::size_t limit = 0);

DevMetrics mean_metrics(std::span<const EvalRecord> records);

/// Trains the dynamic-vocabulary model on the split's training set, with
/// periodic greedy dev evaluation. With separate_training the budget is
/// split evenly: the generator first learns to spell entity names, then
/// the retriever is attached and everything trains jointly.
TrainResult train_dynamic(EntityModel<float>& model, const TaskData& data, const RunConfig& run,
                          const TrainHooks& hooks = {});

/// Trains a generator-only model on baseline inputs of the training set.
TrainResult train_append(EntityModel<float>& model, const TaskData& data, const RunConfig& run, BaselineKind kind,
                         const TrainHooks& hooks = {});

/// Model config for a generator whose inputs carry appended entities.
ModelConfig append_model_config(const RunConfig& run, const Vocabulary& vocab);

/// Run config rendered as CSV preamble pairs.
std::vector<std::pair<std::string, std::string>> provenance(const RunConfig& run);

}  // namespace entdec
