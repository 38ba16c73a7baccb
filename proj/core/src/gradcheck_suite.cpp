#include "entdec/gradcheck_suite.hpp"

#include "entdec/model.hpp"
#include "entdec/ops.hpp"
#include "entdec/rng.hpp"

namespace entdec {

ModelConfig gradcheck_toy_config(RetrieverVariant variant) {
  ModelConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_enc_layers = 1;
  c.n_dec_layers = 1;
  c.n_retriever_layers = 1;
  c.d_ff = 16;
  c.vocab_size = 12;
  c.max_seq_len = 32;
  c.max_entity_len = 8;
  c.dropout = 0.0;
  c.variant = variant;
  c.init_std = 0.3;  // large enough that no gradient is lost in rounding
  return c;
}

std::vector<EncodedSample> gradcheck_toy_batch() {
  const std::int64_t V = 12;
  EncodedSample a;
  a.id = "a";
  a.input = {5, 6, 7, 8, 9};
  a.descriptions = {{5, 10, 11}, {6, 7, 10, 9}, {8, 11}};
  a.target = {5, V + 0, 7, V + 2, 6, Vocabulary::eos_id};
  EncodedSample b;
  b.id = "b";
  b.input = {9, 10, 11};
  b.descriptions = {{7, 7, 8}, {11, 5}};
  b.target = {V + 1, 10, Vocabulary::eos_id};
  return {a, b};
}

GradCheckReport gradcheck_full_model(RetrieverVariant variant, const GradCheckOptions& options) {
  const EntityModel<double> model(gradcheck_toy_config(variant), 3);
  const auto samples = gradcheck_toy_batch();
  std::vector<const EncodedSample*> batch;
  for (const auto& s : samples) {
    batch.push_back(&s);
  }
  auto loss = [&model, &batch] {
    ForwardContext ctx;
    return model.loss(batch, ctx);
  };
  return gradcheck<double>(loss, model.parameters(), options);
}

namespace {

Tensor<double> random_tensor(Rng& rng, Shape shape, double sd = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) {
    x = rng.normal(0.0, sd);
  }
  return Tensor<double>::from(std::move(shape), std::move(v), true);
}

using Params = std::vector<std::pair<std::string, Tensor<double>>>;

// Projects a matrix result onto fixed random weights so every output
// element influences the scalar loss differently.
Tensor<double> weighted_sum(const Tensor<double>& x, Rng& rng) {
  std::vector<double> w(x.numel());
  for (auto& v : w) {
    v = rng.normal(0.0, 1.0);
  }
  return sum(mul(x, Tensor<double>::from(x.shape(), std::move(w))));
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(const GradCheckOptions& options) {
  std::vector<GradCheckCase> out;
  Rng rng(11);

  {
    auto a = random_tensor(rng, {3, 4});
    auto b = random_tensor(rng, {4, 5});
    auto c = random_tensor(rng, {6, 4});
    const Rng seed = rng.fork(2);
    out.push_back({"matmul", gradcheck<double>(
                                 [&] {
                                   Rng r = seed;
                                   return add(weighted_sum(matmul(a, b), r), weighted_sum(matmul_nt(a, c), r));
                                 },
                                 Params{{"a", a}, {"b", b}, {"c", c}}, options)});
  }
  {
    auto x = random_tensor(rng, {4, 6});
    auto g = random_tensor(rng, {6});
    auto be = random_tensor(rng, {6});
    const Rng seed = rng.fork(3);
    out.push_back({"layer_norm", gradcheck<double>(
                                     [&] {
                                       Rng r = seed;
                                       return weighted_sum(layer_norm(x, g, be), r);
                                     },
                                     Params{{"x", x}, {"gamma", g}, {"beta", be}}, options)});
  }
  {
    auto x = random_tensor(rng, {5, 4});
    auto bias = random_tensor(rng, {4});
    const Rng seed = rng.fork(4);
    out.push_back({"softmax_relu_bias", gradcheck<double>(
                                            [&] {
                                              Rng r = seed;
                                              auto h = relu(add_bias(x, bias));
                                              return add(weighted_sum(softmax(x, 1), r), weighted_sum(h, r));
                                            },
                                            Params{{"x", x}, {"bias", bias}}, options)});
  }
  {
    auto table = random_tensor(rng, {7, 3});
    const std::vector<std::int64_t> ids{2, 5, 2, 0};
    const std::vector<std::int64_t> targets{1, -1, 0, 2};
    out.push_back({"gather_cross_entropy", gradcheck<double>(
                                               [&] { return cross_entropy(gather_rows(table, ids), targets); },
                                               Params{{"table", table}}, options)});
  }
  {
    auto x = random_tensor(rng, {7, 3});
    const std::vector<std::size_t> offsets{0, 3, 7};
    const Rng seed = rng.fork(5);
    out.push_back({"max_pool", gradcheck<double>(
                                   [&] {
                                     Rng r = seed;
                                     return add(weighted_sum(max_pool_segments(x, offsets), r),
                                                weighted_sum(max_pool_rows(x), r));
                                   },
                                   Params{{"x", x}}, options)});
  }
  {
    auto q = random_tensor(rng, {5, 4});
    auto k = random_tensor(rng, {6, 4});
    auto v = random_tensor(rng, {6, 4});
    const std::vector<AttentionBlock> blocks{{0, 2, 0, 3, true}, {2, 5, 3, 6, false}};
    const std::vector<std::uint8_t> valid{1, 1, 1, 1, 0, 1};
    const Rng seed = rng.fork(6);
    out.push_back({"attention", gradcheck<double>(
                                    [&] {
                                      Rng r = seed;
                                      return weighted_sum(multi_head_attention(q, k, v, 2, blocks, valid), r);
                                    },
                                    Params{{"q", q}, {"k", k}, {"v", v}}, options)});
  }
  {
    auto g = random_tensor(rng, {4, 3});
    auto base = random_tensor(rng, {5, 3});
    auto ents = random_tensor(rng, {5, 3});
    const std::vector<RowGroup> groups{{0, 2, 0, 3}, {2, 4, 3, 5}};
    const std::vector<std::int64_t> targets{5, 1, 6, 0};
    out.push_back({"dynamic_softmax", gradcheck<double>(
                                          [&] {
                                            auto logits = concat_cols(matmul_nt(g, base),
                                                                      grouped_matmul_nt(g, ents, groups, 3));
                                            return cross_entropy(logits, targets);
                                          },
                                          Params{{"g", g}, {"base", base}, {"entities", ents}}, options)});
  }
  for (auto v : {RetrieverVariant::cross_attention, RetrieverVariant::no_cross_attention,
                 RetrieverVariant::prepend_input}) {
    out.push_back({"model_" + std::string(to_string(v)), gradcheck_full_model(v, options)});
  }
  return out;
}

}  // namespace entdec
