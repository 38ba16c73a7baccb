#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "entdec/config.hpp"
#include "entdec/ops.hpp"
#include "entdec/rng.hpp"
#include "entdec/tensor.hpp"

namespace entdec {

template <typename S>
using NamedParams = std::vector<std::pair<std::string, Tensor<S>>>;

/// Training/eval switch threaded through forward passes. Dropout only runs
/// when training is set and a generator is attached.
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;

  static ForwardContext eval() { return {}; }
};

template <typename S>
Tensor<S> apply_dropout(const Tensor<S>& x, ForwardContext& ctx) {
  if (!ctx.training || ctx.dropout <= 0.0 || ctx.rng == nullptr) {
    return x;
  }
  return dropout(x, ctx.dropout, *ctx.rng);
}

/// Fixed sinusoidal table: even columns sin(t / 10000^(i/d)), odd columns the
/// matching cosine. Row-major T x d.
template <typename S>
std::vector<S> positional_encoding_table(std::size_t length, std::size_t d_model);

template <typename S>
Tensor<S> positional_encoding(std::size_t length, std::size_t d_model) {
  return Tensor<S>::from({length, d_model}, positional_encoding_table<S>(length, d_model));
}

/// Variable-length id sequences packed row-wise, one segment per sequence.
struct PackedSequences {
  std::vector<std::int64_t> ids;
  std::vector<std::size_t> offsets{0};  // size() == count() + 1
  std::vector<std::size_t> positions;   // position of each row inside its sequence

  static PackedSequences pack(std::span<const std::vector<std::int64_t>> sequences);
  void append(std::span<const std::int64_t> sequence);

  std::size_t count() const noexcept { return offsets.size() - 1; }
  std::size_t rows() const noexcept { return ids.size(); }
  std::size_t length(std::size_t i) const { return offsets[i + 1] - offsets[i]; }

  /// One self-attention block per sequence.
  std::vector<AttentionBlock> self_blocks(bool causal) const;
  /// Keys equal to pad_id are masked.
  std::vector<std::uint8_t> key_valid(std::int64_t pad_id) const;
};

template <typename S>
struct Linear {
  Tensor<S> weight;  // in x out
  Tensor<S> bias;    // out

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, double init_std);

  Tensor<S> operator()(const Tensor<S>& x) const { return add_bias(matmul(x, weight), bias); }
  void collect(NamedParams<S>& out, const std::string& prefix) const;
};

template <typename S>
struct LayerNorm {
  Tensor<S> gamma;
  Tensor<S> beta;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t width);

  Tensor<S> operator()(const Tensor<S>& x) const { return layer_norm(x, gamma, beta, 1e-5); }
  void collect(NamedParams<S>& out, const std::string& prefix) const;
};

template <typename S>
struct MultiHeadAttention {
  Linear<S> q;
  Linear<S> k;
  Linear<S> v;
  Linear<S> o;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t d_model, std::size_t heads, Rng& rng, double init_std);

  Tensor<S> operator()(const Tensor<S>& x_query, const Tensor<S>& x_memory,
                       std::span<const AttentionBlock> blocks,
                       std::span<const std::uint8_t> key_valid = {}) const {
    return attend(q(x_query), k(x_memory), v(x_memory), blocks, key_valid);
  }

  /// Attention over already projected queries/keys/values, then output projection.
  Tensor<S> attend(const Tensor<S>& q_proj, const Tensor<S>& k_proj, const Tensor<S>& v_proj,
                   std::span<const AttentionBlock> blocks,
                   std::span<const std::uint8_t> key_valid = {}) const {
    return o(multi_head_attention(q_proj, k_proj, v_proj, heads, blocks, key_valid));
  }

  void collect(NamedParams<S>& out, const std::string& prefix) const;
};

template <typename S>
struct FeedForward {
  Linear<S> up;
  Linear<S> down;

  FeedForward() = default;
  FeedForward(std::size_t d_model, std::size_t d_ff, Rng& rng, double init_std);

  Tensor<S> forward(const Tensor<S>& x, ForwardContext& ctx) const {
    return down(apply_dropout(relu(up(x)), ctx));
  }
  void collect(NamedParams<S>& out, const std::string& prefix) const;
};

/// Pre-norm encoder block: x + SelfAttn(LN x), then x + FFN(LN x).
template <typename S>
struct EncoderLayer {
  LayerNorm<S> norm_attn;
  MultiHeadAttention<S> attn;
  LayerNorm<S> norm_ffn;
  FeedForward<S> ffn;

  EncoderLayer() = default;
  EncoderLayer(const ModelConfig& cfg, Rng& rng);

  Tensor<S> forward(const Tensor<S>& x, std::span<const AttentionBlock> blocks,
                    std::span<const std::uint8_t> key_valid, ForwardContext& ctx) const;
  void collect(NamedParams<S>& out, const std::string& prefix) const;
};

template <typename S>
struct EncoderStack {
  std::vector<EncoderLayer<S>> layers;
  LayerNorm<S> final_norm;

  EncoderStack() = default;
  EncoderStack(const ModelConfig& cfg, std::size_t n_layers, Rng& rng);

  Tensor<S> forward(const Tensor<S>& x, std::span<const AttentionBlock> blocks,
                    std::span<const std::uint8_t> key_valid, ForwardContext& ctx) const;
  void collect(NamedParams<S>& out, const std::string& prefix) const;
};

/// Encoder representations of a packed batch: rows offsets[i]..offsets[i+1]
/// belong to sequence i; rows with key_valid == 0 (padding) are never attended.
template <typename S>
struct EncoderOutput {
  Tensor<S> reps;
  std::vector<std::size_t> offsets{0};
  std::vector<std::uint8_t> key_valid;

  std::size_t count() const noexcept { return offsets.size() - 1; }
};

template <typename S>
struct LayerKV {
  Tensor<S> k;
  Tensor<S> v;
};

/// Projected self-attention keys/values of the decoded prefix, per layer.
template <typename S>
struct KVCache {
  std::vector<LayerKV<S>> layers;
  std::size_t length = 0;
};

/// Projected encoder keys/values for each decoder layer's cross-attention;
/// computed once per sample.
template <typename S>
struct CrossMemory {
  std::vector<LayerKV<S>> layers;
  std::vector<std::uint8_t> key_valid;
};

/// Pre-norm decoder block: causal self-attention, cross-attention over the
/// encoder output, feed-forward; each wrapped as x + f(LN x).
template <typename S>
struct DecoderLayer {
  LayerNorm<S> norm_self;
  MultiHeadAttention<S> self_attn;
  LayerNorm<S> norm_cross;
  MultiHeadAttention<S> cross_attn;
  LayerNorm<S> norm_ffn;
  FeedForward<S> ffn;

  DecoderLayer() = default;
  DecoderLayer(const ModelConfig& cfg, Rng& rng);

  void collect(NamedParams<S>& out, const std::string& prefix) const;
};

template <typename S>
struct DecoderStack {
  std::vector<DecoderLayer<S>> layers;
  LayerNorm<S> final_norm;

  DecoderStack() = default;
  DecoderStack(const ModelConfig& cfg, Rng& rng);

  /// Teacher-forced pass over a packed batch of decoder inputs. Decoder
  /// segment i cross-attends to encoder segment i.
  Tensor<S> forward(const Tensor<S>& x, std::span<const std::size_t> dec_offsets,
                    const EncoderOutput<S>& enc, ForwardContext& ctx) const;

  CrossMemory<S> project_memory(const EncoderOutput<S>& enc) const;

  /// Processes one new embedded row (1 x d) against the cached prefix,
  /// appending this position's keys/values to the cache. Returns the final
  /// hidden state of the new position.
  Tensor<S> step(const Tensor<S>& x_row, KVCache<S>& cache, const CrossMemory<S>& memory) const;

  void collect(NamedParams<S>& out, const std::string& prefix) const;
};

/// Token embedding lookup scaled by sqrt(d_model) plus sinusoidal positions.
template <typename S>
Tensor<S> embed_tokens(const Tensor<S>& table, std::span<const std::int64_t> ids,
                       std::span<const std::size_t> positions, ForwardContext& ctx);

/// Encoder pass over packed sequences with their own embedding table.
template <typename S>
EncoderOutput<S> encode_packed(const Tensor<S>& table, const EncoderStack<S>& stack,
                               const PackedSequences& packed, std::int64_t pad_id, ForwardContext& ctx);

extern template struct Linear<float>;
extern template struct Linear<double>;
extern template struct LayerNorm<float>;
extern template struct LayerNorm<double>;
extern template struct MultiHeadAttention<float>;
extern template struct MultiHeadAttention<double>;
extern template struct FeedForward<float>;
extern template struct FeedForward<double>;
extern template struct EncoderLayer<float>;
extern template struct EncoderLayer<double>;
extern template struct EncoderStack<float>;
extern template struct EncoderStack<double>;
extern template struct DecoderLayer<float>;
extern template struct DecoderLayer<double>;
extern template struct DecoderStack<float>;
extern template struct DecoderStack<double>;

}  // namespace entdec
