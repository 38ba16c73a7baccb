#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "entdec/batch.hpp"
#include "entdec/config.hpp"
#include "entdec/transformer.hpp"

namespace entdec {

/// Base matrices extended with per-sample entity rows. Rows [V, V+M) of
/// both are the same r(Z) rows.
template <typename S>
struct ExtendedMatrices {
  Tensor<S> embedding;  // (V+M) x d
  Tensor<S> output;     // (V+M) x d
  std::size_t base_size = 0;
  std::size_t entity_count = 0;
};

template <typename S>
ExtendedMatrices<S> extend(const Tensor<S>& e_orig, const Tensor<S>& w_out, const Tensor<S>& r_z);

/// softmax(g W^T) over the extended vocabulary; `valid` (empty = all)
/// masks padded entity slots. Returns a rank-1 tensor of size V+M.
template <typename S>
Tensor<S> next_token_dist(const Tensor<S>& g, const ExtendedMatrices<S>& ext,
                          std::span<const std::uint8_t> valid = {});

/// Teacher-forced pass over a batch.
template <typename S>
struct BatchForward {
  Tensor<S> logits;                      // rows: target positions; cols: V + max M (padded -inf)
  std::vector<std::int64_t> targets;     // local dynamic ids, one per logits row
  Tensor<S> entity_embeddings;           // all entities of the batch, sample-major
  std::vector<std::size_t> entity_offsets;  // size batch+1
  std::vector<std::size_t> target_offsets;  // size batch+1
  EncoderOutput<S> encoder;
};

/// Per-sample state for incremental decoding.
template <typename S>
struct DecodeContext {
  EncoderOutput<S> encoder;
  CrossMemory<S> memory;
  ExtendedMatrices<S> matrices;
};

/// Generator (encoder-decoder over a dynamically extended vocabulary) plus
/// the entity retriever. The retriever has its own embedding table and
/// encoder; only the tokenizer is shared.
template <typename S>
class EntityModel {
 public:
  EntityModel() = default;
  EntityModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  std::size_t base_vocab() const noexcept { return config_.vocab_size; }

  /// Every parameter in a fixed order (the checkpoint order).
  NamedParams<S> parameters() const;
  NamedParams<S> generator_parameters() const;
  NamedParams<S> retriever_parameters() const;

  EncoderOutput<S> encode_inputs(std::span<const EncodedSample* const> batch, ForwardContext& ctx) const;

  /// r(Z) for every sample of the batch, stacked sample-major; offsets get
  /// batch+1 entries. `enc` must come from encode_inputs on the same batch.
  Tensor<S> embed_entities(std::span<const EncodedSample* const> batch, const EncoderOutput<S>& enc,
                           ForwardContext& ctx, std::vector<std::size_t>& offsets) const;

  BatchForward<S> forward(std::span<const EncodedSample* const> batch, ForwardContext& ctx) const;

  /// Mean NLL over all target positions of the batch.
  Tensor<S> loss(std::span<const EncodedSample* const> batch, ForwardContext& ctx) const;

  /// Decoder final states for explicit dynamic-id prefixes (teacher forced),
  /// one segment per sample: the g_t rows before the output projection.
  Tensor<S> decoder_states(std::span<const EncodedSample* const> batch,
                           std::span<const std::vector<std::int64_t>> prefixes, const EncoderOutput<S>& enc,
                           const Tensor<S>& entity_embeddings, std::span<const std::size_t> entity_offsets,
                           ForwardContext& ctx) const;

  DecodeContext<S> prepare_decode(const EncodedSample& sample) const;

  /// Feeds one dynamic id at the cache's next position; returns logits over
  /// V + M as a 1 x (V+M) row. Ids must lie in [0, V+M).
  Tensor<S> step_logits(const DecodeContext<S>& ctx, KVCache<S>& cache, std::int64_t token) const;

  Tensor<S> embedding;  // E_orig, V x d
  EncoderStack<S> encoder;
  DecoderStack<S> decoder;
  Tensor<S> output;  // W_out, V x d

  Tensor<S> retriever_embedding;
  EncoderStack<S> retriever_encoder;
  MultiHeadAttention<S> retriever_cross;
  Linear<S> retriever_out;

 private:
  ModelConfig config_;
};

extern template class EntityModel<float>;
extern template class EntityModel<double>;

}  // namespace entdec
