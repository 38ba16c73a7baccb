#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "entdec/model.hpp"
#include "entdec/sample.hpp"
#include "entdec/vocab.hpp"

namespace entdec {

/// Decoder state after some prefix, with the next-token log-probabilities.
struct StepState {
  virtual ~StepState() = default;
  std::vector<double> log_probs;
};

/// Source of next-token distributions for the search procedures. States are
/// immutable once returned, so hypotheses can share a parent.
class Stepper {
 public:
  virtual ~Stepper() = default;
  virtual std::int64_t eos() const = 0;
  /// State after the start token.
  virtual std::shared_ptr<const StepState> start() = 0;
  virtual std::shared_ptr<const StepState> extend(const StepState& state, std::int64_t token) = 0;
};

struct Hypothesis {
  std::vector<std::int64_t> ids;  // excluding EOS
  double score = 0.0;             // sum of chosen log-probabilities, EOS included
  bool finished = false;
};

/// Argmax at every step (lowest id on ties) until EOS or max_len tokens.
Hypothesis greedy_search(Stepper& stepper, std::size_t max_len);

/// Length-unnormalized beam search. Candidates rank by score, then parent
/// rank, then token id. EOS candidates leave the beam and compete by final
/// score; the search stops once the best finished score is at least the
/// best live score. Returns finished hypotheses best first, or the live beam
/// if none finished within max_len.
std::vector<Hypothesis> beam_search(Stepper& stepper, std::size_t beam, std::size_t max_len);

/// Stepper over a trained model for one sample, using the KV cache.
template <typename S>
class ModelStepper : public Stepper {
 public:
  ModelStepper(const EntityModel<S>& model, const EncodedSample& sample);

  std::int64_t eos() const override { return Vocabulary::eos_id; }
  std::shared_ptr<const StepState> start() override;
  std::shared_ptr<const StepState> extend(const StepState& state, std::int64_t token) override;

  const DecodeContext<S>& context() const noexcept { return ctx_; }
  std::size_t dynamic_size() const noexcept { return ctx_.matrices.embedding.rows(); }

 private:
  struct State;
  std::shared_ptr<const StepState> feed(KVCache<S> cache, std::int64_t token);

  const EntityModel<S>* model_;
  DecodeContext<S> ctx_;
};

extern template class ModelStepper<float>;
extern template class ModelStepper<double>;

/// Base ids detokenized, entity id V + j replaced by entities[j].name,
/// joined with single spaces. Specials are dropped.
std::string substitute_entities(std::span<const std::int64_t> ids, const Vocabulary& vocab,
                                std::span<const Entity> entities);

/// Local entity indices (sorted, distinct) among dynamic ids.
std::vector<std::size_t> entities_in(std::span<const std::int64_t> ids, std::size_t base_vocab);

struct DecodeOptions {
  std::size_t beam = 5;
  std::size_t max_len = 128;
};

struct DecodeResult {
  std::vector<std::int64_t> ids;
  std::string output;
  std::vector<std::size_t> entities_used;
  double score = 0.0;
  bool finished = false;
};

/// Beam 1 runs greedy search.
template <typename S>
DecodeResult decode(const EntityModel<S>& model, const Vocabulary& vocab, const Sample& sample,
                    const EncodedSample& encoded, const DecodeOptions& options);

/// JSONL line {"sample_id", "output", "entities_used", "score"}.
std::string decode_result_json(const std::string& sample_id, const DecodeResult& result,
                               std::span<const Entity> entities);

}  // namespace entdec
