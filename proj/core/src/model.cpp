#include "entdec/model.hpp"

#include <algorithm>

#include "entdec/errors.hpp"

namespace entdec {

template <typename S>
ExtendedMatrices<S> extend(const Tensor<S>& e_orig, const Tensor<S>& w_out, const Tensor<S>& r_z) {
  if (e_orig.cols() != w_out.cols() || e_orig.rows() != w_out.rows()) {
    throw DimensionError("extend: E_orig " + shape_string(e_orig.shape()) + " and W_out " +
                         shape_string(w_out.shape()) + " differ");
  }
  ExtendedMatrices<S> ext;
  ext.base_size = e_orig.rows();
  if (!r_z.defined() || r_z.numel() == 0) {
    ext.embedding = e_orig;
    ext.output = w_out;
    return ext;
  }
  if (r_z.cols() != e_orig.cols()) {
    throw DimensionError("extend: entity embeddings have width " + std::to_string(r_z.cols()) + ", model has " +
                         std::to_string(e_orig.cols()));
  }
  ext.entity_count = r_z.rows();
  ext.embedding = concat_rows(e_orig, r_z);
  ext.output = concat_rows(w_out, r_z);
  return ext;
}

template <typename S>
Tensor<S> next_token_dist(const Tensor<S>& g, const ExtendedMatrices<S>& ext, std::span<const std::uint8_t> valid) {
  Tensor<S> logits = matmul_nt(g, ext.output);
  if (!valid.empty()) {
    logits = mask_fill_neg_inf(logits, valid);
  }
  const Tensor<S> p = softmax(logits, 1);
  return reshape(p, {p.numel()});
}

template ExtendedMatrices<float> extend(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template ExtendedMatrices<double> extend(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);
template Tensor<float> next_token_dist(const Tensor<float>&, const ExtendedMatrices<float>&,
                                       std::span<const std::uint8_t>);
template Tensor<double> next_token_dist(const Tensor<double>&, const ExtendedMatrices<double>&,
                                        std::span<const std::uint8_t>);

namespace {

template <typename S>
Tensor<S> normal_table(std::size_t rows, std::size_t cols, Rng& rng, double sd) {
  std::vector<S> values(rows * cols);
  for (auto& v : values) {
    v = static_cast<S>(rng.normal(0.0, sd));
  }
  return Tensor<S>::from({rows, cols}, std::move(values), true);
}

}  // namespace

template <typename S>
EntityModel<S>::EntityModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const Rng root(seed);
  const std::size_t V = config_.vocab_size;
  const std::size_t d = config_.d_model;
  Rng r0 = root.fork(0);
  embedding = normal_table<S>(V, d, r0, init_scale(config_.init_std, d));
  Rng r1 = root.fork(1);
  encoder = EncoderStack<S>(config_, config_.n_enc_layers, r1);
  Rng r2 = root.fork(2);
  decoder = DecoderStack<S>(config_, r2);
  Rng r3 = root.fork(3);
  output = normal_table<S>(V, d, r3, init_scale(config_.init_std, d));
  Rng r4 = root.fork(4);
  retriever_embedding = normal_table<S>(V, d, r4, init_scale(config_.init_std, d));
  Rng r5 = root.fork(5);
  retriever_encoder = EncoderStack<S>(config_, config_.n_retriever_layers, r5);
  Rng r6 = root.fork(6);
  retriever_cross = MultiHeadAttention<S>(d, config_.n_heads, r6, config_.init_std);
  Rng r7 = root.fork(7);
  retriever_out = Linear<S>(d, d, r7, config_.init_std);
}

template <typename S>
NamedParams<S> EntityModel<S>::generator_parameters() const {
  NamedParams<S> out;
  out.emplace_back("gen.embedding", embedding);
  encoder.collect(out, "gen.encoder");
  decoder.collect(out, "gen.decoder");
  out.emplace_back("gen.output", output);
  return out;
}

template <typename S>
NamedParams<S> EntityModel<S>::retriever_parameters() const {
  NamedParams<S> out;
  out.emplace_back("ret.embedding", retriever_embedding);
  retriever_encoder.collect(out, "ret.encoder");
  retriever_cross.collect(out, "ret.cross");
  retriever_out.collect(out, "ret.out");
  return out;
}

template <typename S>
NamedParams<S> EntityModel<S>::parameters() const {
  NamedParams<S> out = generator_parameters();
  for (auto& p : retriever_parameters()) {
    out.push_back(std::move(p));
  }
  return out;
}

template <typename S>
EncoderOutput<S> EntityModel<S>::encode_inputs(std::span<const EncodedSample* const> batch,
                                               ForwardContext& ctx) const {
  PackedSequences packed;
  for (const auto* s : batch) {
    if (s->input.size() > config_.max_seq_len) {
      throw DimensionError("sample '" + s->id + "': input of " + std::to_string(s->input.size()) +
                           " tokens exceeds max_seq_len");
    }
    packed.append(s->input);
  }
  for (auto id : packed.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      throw IndexError("input id " + std::to_string(id) + " outside the base vocabulary");
    }
  }
  return encode_packed(embedding, encoder, packed, Vocabulary::pad_id, ctx);
}

template <typename S>
Tensor<S> EntityModel<S>::embed_entities(std::span<const EncodedSample* const> batch, const EncoderOutput<S>& enc,
                                         ForwardContext& ctx, std::vector<std::size_t>& offsets) const {
  offsets.assign(1, 0);
  for (const auto* s : batch) {
    offsets.push_back(offsets.back() + s->entity_count());
  }
  const std::size_t d = config_.d_model;
  if (offsets.back() == 0) {
    return Tensor<S>::zeros({0, d});
  }

  PackedSequences packed;
  for (const auto* s : batch) {
    for (const auto& desc : s->descriptions) {
      if (desc.empty()) {
        throw DataError("sample '" + s->id + "': empty entity description");
      }
      if (config_.variant == RetrieverVariant::prepend_input) {
        std::vector<std::int64_t> joined = s->input;
        joined.push_back(Vocabulary::sep_id);
        joined.insert(joined.end(), desc.begin(), desc.end());
        packed.append(joined);
      } else {
        packed.append(desc);
      }
    }
  }
  const EncoderOutput<S> h = encode_packed(retriever_embedding, retriever_encoder, packed, Vocabulary::pad_id, ctx);

  if (config_.variant != RetrieverVariant::cross_attention) {
    return max_pool_segments(retriever_out(h.reps), packed.offsets);
  }

  // Generator input rows, replicated once per entity of the same sample, are
  // the queries; the entity's description rows are keys and values.
  const Tensor<S> q_all = retriever_cross.q(enc.reps);
  std::vector<std::int64_t> rows;
  std::vector<AttentionBlock> blocks;
  std::vector<std::size_t> pool_offsets{0};
  std::size_t entity = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t j = 0; j < batch[i]->entity_count(); ++j, ++entity) {
      const std::size_t q_begin = rows.size();
      for (std::size_t r = enc.offsets[i]; r < enc.offsets[i + 1]; ++r) {
        rows.push_back(static_cast<std::int64_t>(r));
      }
      blocks.push_back({q_begin, rows.size(), packed.offsets[entity], packed.offsets[entity + 1], false});
      pool_offsets.push_back(rows.size());
    }
  }
  const Tensor<S> q = gather_rows(q_all, rows);
  const Tensor<S> attended = retriever_cross.attend(q, retriever_cross.k(h.reps), retriever_cross.v(h.reps),
                                                    blocks, h.key_valid);
  return max_pool_segments(retriever_out(attended), pool_offsets);
}

template <typename S>
Tensor<S> EntityModel<S>::decoder_states(std::span<const EncodedSample* const> batch,
                                         std::span<const std::vector<std::int64_t>> prefixes,
                                         const EncoderOutput<S>& enc, const Tensor<S>& entity_embeddings,
                                         std::span<const std::size_t> entity_offsets, ForwardContext& ctx) const {
  if (prefixes.size() != batch.size()) {
    throw DimensionError("decoder_states: one prefix per sample expected");
  }
  const auto V = static_cast<std::int64_t>(config_.vocab_size);
  std::vector<std::int64_t> ids;
  std::vector<std::size_t> positions;
  std::vector<std::size_t> offsets{0};
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto m = static_cast<std::int64_t>(entity_offsets[i + 1] - entity_offsets[i]);
    if (prefixes[i].size() > config_.max_seq_len) {
      throw DimensionError("sample '" + batch[i]->id + "': decoder prefix exceeds max_seq_len");
    }
    for (std::size_t t = 0; t < prefixes[i].size(); ++t) {
      const std::int64_t id = prefixes[i][t];
      if (id < 0 || id >= V + m) {
        throw IndexError("sample '" + batch[i]->id + "': dynamic id " + std::to_string(id) + " outside [0, " +
                         std::to_string(V + m) + ")");
      }
      ids.push_back(id < V ? id : V + static_cast<std::int64_t>(entity_offsets[i]) + (id - V));
      positions.push_back(t);
    }
    offsets.push_back(ids.size());
  }
  const Tensor<S> table = entity_embeddings.rows() > 0 ? concat_rows(embedding, entity_embeddings) : embedding;
  const Tensor<S> x = embed_tokens(table, ids, positions, ctx);
  return decoder.forward(x, offsets, enc, ctx);
}

template <typename S>
BatchForward<S> EntityModel<S>::forward(std::span<const EncodedSample* const> batch, ForwardContext& ctx) const {
  BatchForward<S> out;
  out.encoder = encode_inputs(batch, ctx);
  out.entity_embeddings = embed_entities(batch, out.encoder, ctx, out.entity_offsets);

  const auto V = static_cast<std::int64_t>(config_.vocab_size);
  std::vector<std::vector<std::int64_t>> prefixes;
  out.target_offsets.assign(1, 0);
  std::size_t max_m = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& target = batch[i]->target;
    const auto m = static_cast<std::int64_t>(batch[i]->entity_count());
    max_m = std::max<std::size_t>(max_m, batch[i]->entity_count());
    std::vector<std::int64_t> prefix{Vocabulary::bos_id};
    for (std::size_t t = 0; t < target.size(); ++t) {
      if (target[t] < 0 || target[t] >= V + m) {
        throw DataError("sample '" + batch[i]->id + "': target id " + std::to_string(target[t]) +
                        " outside the dynamic range [0, " + std::to_string(V + m) + ")");
      }
      out.targets.push_back(target[t]);
      if (t + 1 < target.size()) {
        prefix.push_back(target[t]);
      }
    }
    if (target.empty()) {
      prefix.clear();
    }
    out.target_offsets.push_back(out.targets.size());
    prefixes.push_back(std::move(prefix));
  }

  const Tensor<S> g =
      decoder_states(batch, prefixes, out.encoder, out.entity_embeddings, out.entity_offsets, ctx);
  out.logits = matmul_nt(g, output);
  if (max_m > 0) {
    std::vector<RowGroup> groups;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      groups.push_back({out.target_offsets[i], out.target_offsets[i + 1], out.entity_offsets[i],
                        out.entity_offsets[i + 1]});
    }
    out.logits = concat_cols(out.logits, grouped_matmul_nt(g, out.entity_embeddings, groups, max_m));
  }
  return out;
}

template <typename S>
Tensor<S> EntityModel<S>::loss(std::span<const EncodedSample* const> batch, ForwardContext& ctx) const {
  const BatchForward<S> f = forward(batch, ctx);
  return cross_entropy(f.logits, f.targets);
}

template <typename S>
DecodeContext<S> EntityModel<S>::prepare_decode(const EncodedSample& sample) const {
  NoGradGuard no_grad;
  ForwardContext ctx;
  const EncodedSample* one[] = {&sample};
  DecodeContext<S> dc;
  dc.encoder = encode_inputs(one, ctx);
  std::vector<std::size_t> offsets;
  const Tensor<S> r = embed_entities(one, dc.encoder, ctx, offsets);
  dc.matrices = extend(embedding, output, r);
  dc.memory = decoder.project_memory(dc.encoder);
  return dc;
}

template <typename S>
Tensor<S> EntityModel<S>::step_logits(const DecodeContext<S>& dc, KVCache<S>& cache, std::int64_t token) const {
  NoGradGuard no_grad;
  const auto limit = static_cast<std::int64_t>(dc.matrices.embedding.rows());
  if (token < 0 || token >= limit) {
    throw IndexError("dynamic id " + std::to_string(token) + " outside [0, " + std::to_string(limit) + ")");
  }
  if (cache.length >= config_.max_seq_len) {
    throw DimensionError("decoding beyond max_seq_len");
  }
  ForwardContext ctx;
  const std::int64_t ids[] = {token};
  const std::size_t pos[] = {cache.length};
  const Tensor<S> x = embed_tokens(dc.matrices.embedding, ids, pos, ctx);
  const Tensor<S> g = decoder.step(x, cache, dc.memory);
  return matmul_nt(g, dc.matrices.output);
}

template class EntityModel<float>;
template class EntityModel<double>;

}  // namespace entdec
