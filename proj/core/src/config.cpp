#include "entdec/config.hpp"

#include <cmath>
#include <sstream>

#include "entdec/errors.hpp"

namespace entdec {

std::string_view to_string(RetrieverVariant v) noexcept {
  switch (v) {
    case RetrieverVariant::cross_attention:
      return "cross_attention";
    case RetrieverVariant::no_cross_attention:
      return "no_cross_attention";
    case RetrieverVariant::prepend_input:
      return "prepend_input";
  }
  return "cross_attention";
}

RetrieverVariant parse_retriever_variant(std::string_view text) {
  if (text == "cross_attention") {
    return RetrieverVariant::cross_attention;
  }
  if (text == "no_cross_attention") {
    return RetrieverVariant::no_cross_attention;
  }
  if (text == "prepend_input") {
    return RetrieverVariant::prepend_input;
  }
  throw UsageError("unknown retriever variant '" + std::string(text) + "'");
}

void ModelConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw UsageError("model config: d_model must be a positive multiple of n_heads");
  }
  if (vocab_size < 5) {
    throw UsageError("model config: vocab_size must cover the 5 reserved ids");
  }
  if (!(init_std >= 0.0)) {
    throw UsageError("model config: init_std must be non-negative");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw UsageError("model config: dropout must lie in [0, 1)");
  }
  if (d_ff == 0 || max_seq_len == 0 || max_entity_len == 0) {
    throw UsageError("model config: d_ff, max_seq_len and max_entity_len must be positive");
  }
  if (n_enc_layers == 0 || n_dec_layers == 0 || n_retriever_layers == 0) {
    throw UsageError("model config: every stack needs at least one layer");
  }
}

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::size_t get_size(const std::map<std::string, std::string>& kv, const std::string& key,
                     std::size_t fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) {
    return fallback;
  }
  try {
    return static_cast<std::size_t>(std::stoull(it->second));
  } catch (const std::exception&) {
    throw DataError("config key '" + key + "' is not an unsigned integer: " + it->second);
  }
}

double get_double(const std::map<std::string, std::string>& kv, const std::string& key, double fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) {
    return fallback;
  }
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw DataError("config key '" + key + "' is not a number: " + it->second);
  }
}

}  // namespace

std::map<std::string, std::string> ModelConfig::to_map() const {
  return {
      {"d_model", std::to_string(d_model)},
      {"n_heads", std::to_string(n_heads)},
      {"n_enc_layers", std::to_string(n_enc_layers)},
      {"n_dec_layers", std::to_string(n_dec_layers)},
      {"d_ff", std::to_string(d_ff)},
      {"max_seq_len", std::to_string(max_seq_len)},
      {"vocab_size", std::to_string(vocab_size)},
      {"dropout", fmt_double(dropout)},
      {"n_retriever_layers", std::to_string(n_retriever_layers)},
      {"max_entity_len", std::to_string(max_entity_len)},
      {"variant", std::string(to_string(variant))},
      {"init_std", fmt_double(init_std)},
  };
}

double init_scale(double init_std, std::size_t fan_in) noexcept {
  return init_std > 0.0 ? init_std : 1.0 / std::sqrt(static_cast<double>(fan_in));
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  c.d_model = get_size(kv, "d_model", c.d_model);
  c.n_heads = get_size(kv, "n_heads", c.n_heads);
  c.n_enc_layers = get_size(kv, "n_enc_layers", c.n_enc_layers);
  c.n_dec_layers = get_size(kv, "n_dec_layers", c.n_dec_layers);
  c.d_ff = get_size(kv, "d_ff", c.d_ff);
  c.max_seq_len = get_size(kv, "max_seq_len", c.max_seq_len);
  c.vocab_size = get_size(kv, "vocab_size", c.vocab_size);
  c.dropout = get_double(kv, "dropout", c.dropout);
  c.n_retriever_layers = get_size(kv, "n_retriever_layers", c.n_retriever_layers);
  c.max_entity_len = get_size(kv, "max_entity_len", c.max_entity_len);
  if (auto it = kv.find("variant"); it != kv.end()) {
    c.variant = parse_retriever_variant(it->second);
  }
  c.init_std = get_double(kv, "init_std", c.init_std);
  return c;
}

}  // namespace entdec
