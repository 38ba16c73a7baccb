#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "entdec/rng.hpp"
#include "entdec/tensor.hpp"

namespace entdec {

// Differentiable operations. Matrix ops accept rank-1 tensors as single rows
// and return rank-2 results unless stated otherwise. Shape mismatches throw
// DimensionError, bad indices IndexError.

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b);

/// a * b^T without materializing the transpose.
template <typename S>
Tensor<S> matmul_nt(const Tensor<S>& a, const Tensor<S>& b);

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b);

/// Elementwise product.
template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b);

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S factor);

/// Adds a length-cols bias to every row.
template <typename S>
Tensor<S> add_bias(const Tensor<S>& a, const Tensor<S>& bias);

template <typename S>
Tensor<S> relu(const Tensor<S>& a);

/// Inverted dropout; identity when p == 0.
template <typename S>
Tensor<S> dropout(const Tensor<S>& a, double p, Rng& rng);

/// Max-subtracted softmax along axis 0 (columns) or 1 (rows). Entries equal
/// to -inf get probability 0; a row that is entirely -inf becomes zeros.
template <typename S>
Tensor<S> softmax(const Tensor<S>& a, std::size_t axis);

/// Per-row normalization over the last dimension followed by gamma/beta.
/// A zero-variance row maps to beta.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     double eps = 1e-5);

/// Row lookup table[ids]; backward scatter-adds into the table.
template <typename S>
Tensor<S> gather_rows(const Tensor<S>& table, std::span<const std::int64_t> ids);

template <typename S>
Tensor<S> embedding_gather(const Tensor<S>& table, std::span<const std::int64_t> ids) {
  return gather_rows(table, ids);
}

template <typename S>
Tensor<S> concat_rows(const Tensor<S>& a, const Tensor<S>& b);

template <typename S>
Tensor<S> concat_cols(const Tensor<S>& a, const Tensor<S>& b);

template <typename S>
Tensor<S> slice_rows(const Tensor<S>& x, std::size_t begin, std::size_t end);

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape);

/// Column-wise maximum over all rows: [T x d] -> [d]. Gradient goes to the
/// first row attaining each maximum.
template <typename S>
Tensor<S> max_pool_rows(const Tensor<S>& x);

/// Column-wise maximum within consecutive row segments delimited by
/// offsets (size n+1, offsets[0] == 0, last == rows): -> [n x d].
template <typename S>
Tensor<S> max_pool_segments(const Tensor<S>& x, std::span<const std::size_t> offsets);

template <typename S>
Tensor<S> sum(const Tensor<S>& x);

template <typename S>
Tensor<S> mean(const Tensor<S>& x);

/// Sets entries whose mask byte is zero to -inf (gradient blocked there).
template <typename S>
Tensor<S> mask_fill_neg_inf(const Tensor<S>& x, std::span<const std::uint8_t> keep);

/// Mean negative log-likelihood of targets under row-wise softmax(logits).
/// Rows whose target is negative are ignored. -inf logits are allowed as long
/// as the target's logit is finite.
template <typename S>
Tensor<S> cross_entropy(const Tensor<S>& logits, std::span<const std::int64_t> targets);

/// One attention problem inside a packed multi-head attention call: query
/// rows [q_begin, q_end) attend over key rows [k_begin, k_end). With causal
/// set, local query i sees local keys j <= i + (k_len - q_len).
struct AttentionBlock {
  std::size_t q_begin = 0;
  std::size_t q_end = 0;
  std::size_t k_begin = 0;
  std::size_t k_end = 0;
  bool causal = false;
};

/// Diagnostics for query rows that had no unmasked key. Such rows output
/// zeros instead of NaN.
struct AttentionDiagnostics {
  std::size_t fully_masked_rows = 0;
};

AttentionDiagnostics& attention_diagnostics() noexcept;

/// Packed scaled dot-product attention over already projected q/k/v with
/// `heads` equal column groups. key_valid (empty = all valid) masks key rows
/// globally. Query rows not covered by any block are zero.
template <typename S>
Tensor<S> multi_head_attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v,
                               std::size_t heads, std::span<const AttentionBlock> blocks,
                               std::span<const std::uint8_t> key_valid = {});

/// Row groups of `a` multiplied against row groups of `b`:
/// out[r, j] = a[r] . b[b_begin + j] for j < b_end - b_begin, -inf for the
/// remaining columns up to `width` (padded slots).
struct RowGroup {
  std::size_t a_begin = 0;
  std::size_t a_end = 0;
  std::size_t b_begin = 0;
  std::size_t b_end = 0;
};

template <typename S>
Tensor<S> grouped_matmul_nt(const Tensor<S>& a, const Tensor<S>& b,
                            std::span<const RowGroup> groups, std::size_t width);

/// Adds a constant (non-differentiable) tensor of equal shape.
template <typename S>
Tensor<S> add_constant(const Tensor<S>& a, std::span<const S> constant);

}  // namespace entdec
