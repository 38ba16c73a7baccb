#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace entdec {

/// How entity descriptions become entity embeddings.
enum class RetrieverVariant {
  cross_attention,     // encoder over z, cross-attend from generator encoder reps, max-pool
  no_cross_attention,  // encoder over z, max-pool
  prepend_input,       // encoder over (x <sep> z), max-pool
};

std::string_view to_string(RetrieverVariant v) noexcept;
RetrieverVariant parse_retriever_variant(std::string_view text);

/// Architecture of the generator and the retriever. The retriever shares
/// d_model/n_heads/d_ff with the generator but owns its parameters.
struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_enc_layers = 2;
  std::size_t n_dec_layers = 2;
  std::size_t d_ff = 256;
  std::size_t max_seq_len = 256;
  std::size_t vocab_size = 0;  // V, including the reserved ids
  double dropout = 0.1;

  std::size_t n_retriever_layers = 2;
  std::size_t max_entity_len = 64;
  RetrieverVariant variant = RetrieverVariant::cross_attention;

  /// Fixed init std when positive; 0 scales each matrix by 1/sqrt(fan_in).
  double init_std = 0.0;

  /// Throws UsageError when an invariant is violated.
  void validate() const;

  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& kv);

  bool operator==(const ModelConfig&) const = default;
};

/// Std for a weight matrix with the given fan-in under `init_std`.
double init_scale(double init_std, std::size_t fan_in) noexcept;

}  // namespace entdec
