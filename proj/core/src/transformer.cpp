#include "entdec/transformer.hpp"

#include <cmath>

#include "entdec/errors.hpp"

namespace entdec {

template <typename S>
std::vector<S> positional_encoding_table(std::size_t length, std::size_t d_model) {
  std::vector<S> table(length * d_model);
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t i = 0; i < d_model; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d_model));
      const double angle = static_cast<double>(t) * freq;
      table[t * d_model + i] = static_cast<S>(std::sin(angle));
      if (i + 1 < d_model) {
        table[t * d_model + i + 1] = static_cast<S>(std::cos(angle));
      }
    }
  }
  return table;
}

template std::vector<float> positional_encoding_table(std::size_t, std::size_t);
template std::vector<double> positional_encoding_table(std::size_t, std::size_t);

PackedSequences PackedSequences::pack(std::span<const std::vector<std::int64_t>> sequences) {
  PackedSequences p;
  for (const auto& s : sequences) {
    p.append(s);
  }
  return p;
}

void PackedSequences::append(std::span<const std::int64_t> sequence) {
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    ids.push_back(sequence[t]);
    positions.push_back(t);
  }
  offsets.push_back(ids.size());
}

std::vector<AttentionBlock> PackedSequences::self_blocks(bool causal) const {
  std::vector<AttentionBlock> blocks;
  blocks.reserve(count());
  for (std::size_t i = 0; i < count(); ++i) {
    if (offsets[i + 1] > offsets[i]) {
      blocks.push_back({offsets[i], offsets[i + 1], offsets[i], offsets[i + 1], causal});
    }
  }
  return blocks;
}

std::vector<std::uint8_t> PackedSequences::key_valid(std::int64_t pad_id) const {
  std::vector<std::uint8_t> keep(ids.size());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    keep[r] = ids[r] != pad_id ? 1 : 0;
  }
  return keep;
}

namespace {

template <typename S>
Tensor<S> normal_tensor(Shape shape, Rng& rng, double sd) {
  std::vector<S> values(shape_numel(shape));
  for (auto& v : values) {
    v = static_cast<S>(rng.normal(0.0, sd));
  }
  return Tensor<S>::from(std::move(shape), std::move(values), true);
}

}  // namespace

template <typename S>
Linear<S>::Linear(std::size_t in, std::size_t out, Rng& rng, double init_std)
    : weight(normal_tensor<S>({in, out}, rng, init_scale(init_std, in))), bias(Tensor<S>::zeros({out}, true)) {}

template <typename S>
void Linear<S>::collect(NamedParams<S>& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

template <typename S>
LayerNorm<S>::LayerNorm(std::size_t width)
    : gamma(Tensor<S>::full({width}, S{1}, true)), beta(Tensor<S>::zeros({width}, true)) {}

template <typename S>
void LayerNorm<S>::collect(NamedParams<S>& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

template <typename S>
MultiHeadAttention<S>::MultiHeadAttention(std::size_t d_model, std::size_t n_heads, Rng& rng,
                                          double init_std)
    : q(d_model, d_model, rng, init_std),
      k(d_model, d_model, rng, init_std),
      v(d_model, d_model, rng, init_std),
      o(d_model, d_model, rng, init_std),
      heads(n_heads) {}

template <typename S>
void MultiHeadAttention<S>::collect(NamedParams<S>& out, const std::string& prefix) const {
  q.collect(out, prefix + ".q");
  k.collect(out, prefix + ".k");
  v.collect(out, prefix + ".v");
  o.collect(out, prefix + ".o");
}

template <typename S>
FeedForward<S>::FeedForward(std::size_t d_model, std::size_t d_ff, Rng& rng, double init_std)
    : up(d_model, d_ff, rng, init_std), down(d_ff, d_model, rng, init_std) {}

template <typename S>
void FeedForward<S>::collect(NamedParams<S>& out, const std::string& prefix) const {
  up.collect(out, prefix + ".up");
  down.collect(out, prefix + ".down");
}

template <typename S>
EncoderLayer<S>::EncoderLayer(const ModelConfig& cfg, Rng& rng)
    : norm_attn(cfg.d_model),
      attn(cfg.d_model, cfg.n_heads, rng, cfg.init_std),
      norm_ffn(cfg.d_model),
      ffn(cfg.d_model, cfg.d_ff, rng, cfg.init_std) {}

template <typename S>
Tensor<S> EncoderLayer<S>::forward(const Tensor<S>& x, std::span<const AttentionBlock> blocks,
                                   std::span<const std::uint8_t> key_valid,
                                   ForwardContext& ctx) const {
  const Tensor<S> a = norm_attn(x);
  Tensor<S> h = add(x, apply_dropout(attn(a, a, blocks, key_valid), ctx));
  return add(h, apply_dropout(ffn.forward(norm_ffn(h), ctx), ctx));
}

template <typename S>
void EncoderLayer<S>::collect(NamedParams<S>& out, const std::string& prefix) const {
  norm_attn.collect(out, prefix + ".norm_attn");
  attn.collect(out, prefix + ".attn");
  norm_ffn.collect(out, prefix + ".norm_ffn");
  ffn.collect(out, prefix + ".ffn");
}

template <typename S>
EncoderStack<S>::EncoderStack(const ModelConfig& cfg, std::size_t n_layers, Rng& rng)
    : final_norm(cfg.d_model) {
  layers.reserve(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    layers.emplace_back(cfg, rng);
  }
}

template <typename S>
Tensor<S> EncoderStack<S>::forward(const Tensor<S>& x, std::span<const AttentionBlock> blocks,
                                   std::span<const std::uint8_t> key_valid,
                                   ForwardContext& ctx) const {
  Tensor<S> h = x;
  for (const auto& layer : layers) {
    h = layer.forward(h, blocks, key_valid, ctx);
  }
  return final_norm(h);
}

template <typename S>
void EncoderStack<S>::collect(NamedParams<S>& out, const std::string& prefix) const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].collect(out, prefix + ".layer" + std::to_string(l));
  }
  final_norm.collect(out, prefix + ".final_norm");
}

template <typename S>
DecoderLayer<S>::DecoderLayer(const ModelConfig& cfg, Rng& rng)
    : norm_self(cfg.d_model),
      self_attn(cfg.d_model, cfg.n_heads, rng, cfg.init_std),
      norm_cross(cfg.d_model),
      cross_attn(cfg.d_model, cfg.n_heads, rng, cfg.init_std),
      norm_ffn(cfg.d_model),
      ffn(cfg.d_model, cfg.d_ff, rng, cfg.init_std) {}

template <typename S>
void DecoderLayer<S>::collect(NamedParams<S>& out, const std::string& prefix) const {
  norm_self.collect(out, prefix + ".norm_self");
  self_attn.collect(out, prefix + ".self_attn");
  norm_cross.collect(out, prefix + ".norm_cross");
  cross_attn.collect(out, prefix + ".cross_attn");
  norm_ffn.collect(out, prefix + ".norm_ffn");
  ffn.collect(out, prefix + ".ffn");
}

template <typename S>
DecoderStack<S>::DecoderStack(const ModelConfig& cfg, Rng& rng) : final_norm(cfg.d_model) {
  layers.reserve(cfg.n_dec_layers);
  for (std::size_t l = 0; l < cfg.n_dec_layers; ++l) {
    layers.emplace_back(cfg, rng);
  }
}

template <typename S>
Tensor<S> DecoderStack<S>::forward(const Tensor<S>& x, std::span<const std::size_t> dec_offsets,
                                   const EncoderOutput<S>& enc, ForwardContext& ctx) const {
  const std::size_t n = dec_offsets.size() - 1;
  if (n != enc.count()) {
    throw DimensionError("decoder: " + std::to_string(n) + " target segments for " +
                         std::to_string(enc.count()) + " encoder segments");
  }
  std::vector<AttentionBlock> self_blocks;
  std::vector<AttentionBlock> cross_blocks;
  for (std::size_t i = 0; i < n; ++i) {
    if (dec_offsets[i + 1] == dec_offsets[i]) {
      continue;
    }
    self_blocks.push_back({dec_offsets[i], dec_offsets[i + 1], dec_offsets[i], dec_offsets[i + 1], true});
    cross_blocks.push_back({dec_offsets[i], dec_offsets[i + 1], enc.offsets[i], enc.offsets[i + 1], false});
  }
  Tensor<S> h = x;
  for (const auto& layer : layers) {
    const Tensor<S> a = layer.norm_self(h);
    h = add(h, apply_dropout(layer.self_attn(a, a, self_blocks), ctx));
    h = add(h, apply_dropout(layer.cross_attn(layer.norm_cross(h), enc.reps, cross_blocks, enc.key_valid), ctx));
    h = add(h, apply_dropout(layer.ffn.forward(layer.norm_ffn(h), ctx), ctx));
  }
  return final_norm(h);
}

template <typename S>
CrossMemory<S> DecoderStack<S>::project_memory(const EncoderOutput<S>& enc) const {
  CrossMemory<S> mem;
  mem.key_valid = enc.key_valid;
  mem.layers.reserve(layers.size());
  for (const auto& layer : layers) {
    mem.layers.push_back({layer.cross_attn.k(enc.reps), layer.cross_attn.v(enc.reps)});
  }
  return mem;
}

template <typename S>
Tensor<S> DecoderStack<S>::step(const Tensor<S>& x_row, KVCache<S>& cache,
                                const CrossMemory<S>& memory) const {
  if (x_row.rows() != 1) {
    throw DimensionError("decoder step expects a single row, got " + shape_string(x_row.shape()));
  }
  if (memory.layers.size() != layers.size()) {
    throw UsageError("decoder step: cross memory was projected for a different decoder");
  }
  if (cache.layers.empty()) {
    cache.layers.resize(layers.size());
  }
  const std::size_t t = cache.length;
  Tensor<S> h = x_row;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    auto& kv = cache.layers[l];
    const Tensor<S> a = layer.norm_self(h);
    const Tensor<S> k_new = layer.self_attn.k(a);
    const Tensor<S> v_new = layer.self_attn.v(a);
    kv.k = kv.k.defined() ? concat_rows(kv.k, k_new) : k_new;
    kv.v = kv.v.defined() ? concat_rows(kv.v, v_new) : v_new;
    const AttentionBlock self_block{0, 1, 0, t + 1, false};
    h = add(h, layer.self_attn.attend(layer.self_attn.q(a), kv.k, kv.v, {&self_block, 1}));

    const auto& mem = memory.layers[l];
    const AttentionBlock cross_block{0, 1, 0, mem.k.rows(), false};
    h = add(h, layer.cross_attn.attend(layer.cross_attn.q(layer.norm_cross(h)), mem.k, mem.v,
                                       {&cross_block, 1}, memory.key_valid));
    ForwardContext eval;
    h = add(h, layer.ffn.forward(layer.norm_ffn(h), eval));
  }
  cache.length = t + 1;
  return final_norm(h);
}

template <typename S>
void DecoderStack<S>::collect(NamedParams<S>& out, const std::string& prefix) const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].collect(out, prefix + ".layer" + std::to_string(l));
  }
  final_norm.collect(out, prefix + ".final_norm");
}

template <typename S>
Tensor<S> embed_tokens(const Tensor<S>& table, std::span<const std::int64_t> ids,
                       std::span<const std::size_t> positions, ForwardContext& ctx) {
  if (positions.size() != ids.size()) {
    throw DimensionError("embed_tokens: ids and positions differ in length");
  }
  const std::size_t d = table.cols();
  std::size_t max_pos = 0;
  for (auto p : positions) {
    max_pos = std::max(max_pos, p);
  }
  const auto pe = positional_encoding_table<S>(ids.empty() ? 0 : max_pos + 1, d);
  std::vector<S> offsets(ids.size() * d);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    std::copy_n(pe.begin() + static_cast<std::ptrdiff_t>(positions[r] * d), d,
                offsets.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  Tensor<S> x = scale(gather_rows(table, ids), static_cast<S>(std::sqrt(static_cast<double>(d))));
  x = add_constant(x, std::span<const S>(offsets));
  return apply_dropout(x, ctx);
}

template <typename S>
EncoderOutput<S> encode_packed(const Tensor<S>& table, const EncoderStack<S>& stack,
                               const PackedSequences& packed, std::int64_t pad_id, ForwardContext& ctx) {
  EncoderOutput<S> out;
  out.offsets = packed.offsets;
  out.key_valid = packed.key_valid(pad_id);
  const Tensor<S> x = embed_tokens(table, packed.ids, packed.positions, ctx);
  out.reps = stack.forward(x, packed.self_blocks(false), out.key_valid, ctx);
  return out;
}

template Tensor<float> embed_tokens(const Tensor<float>&, std::span<const std::int64_t>,
                                    std::span<const std::size_t>, ForwardContext&);
template Tensor<double> embed_tokens(const Tensor<double>&, std::span<const std::int64_t>,
                                     std::span<const std::size_t>, ForwardContext&);
template EncoderOutput<float> encode_packed(const Tensor<float>&, const EncoderStack<float>&,
                                            const PackedSequences&, std::int64_t, ForwardContext&);
template EncoderOutput<double> encode_packed(const Tensor<double>&, const EncoderStack<double>&,
                                             const PackedSequences&, std::int64_t, ForwardContext&);

template struct Linear<float>;
template struct Linear<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;
template struct MultiHeadAttention<float>;
template struct MultiHeadAttention<double>;
template struct FeedForward<float>;
template struct FeedForward<double>;
template struct EncoderLayer<float>;
template struct EncoderLayer<double>;
template struct EncoderStack<float>;
template struct EncoderStack<double>;
template struct DecoderLayer<float>;
template struct DecoderLayer<double>;
template struct DecoderStack<float>;
template struct DecoderStack<double>;

}  // namespace entdec
