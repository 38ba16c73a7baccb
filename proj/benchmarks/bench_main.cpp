#include <benchmark/benchmark.h>

#include "entdec/decoding.hpp"
#include "entdec/experiment.hpp"
#include "entdec/ops.hpp"
#include "entdec/rng.hpp"

using namespace entdec;

namespace {

Tensor<float> random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  std::vector<float> v(r * c);
  for (auto& x : v) {
    x = static_cast<float>(rng.normal());
  }
  return Tensor<float>::from({r, c}, std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  auto a = random_matrix(rng, n, n);
  auto b = random_matrix(rng, n, n);
  NoGradGuard ng;
  for (auto _ : state) {
    benchmark::DoNotOptimize(matmul(a, b));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 256);

void BM_Attention(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  auto q = random_matrix(rng, t, 64);
  auto k = random_matrix(rng, t, 64);
  auto v = random_matrix(rng, t, 64);
  const std::vector<AttentionBlock> blocks{{0, t, 0, t, true}};
  NoGradGuard ng;
  for (auto _ : state) {
    benchmark::DoNotOptimize(multi_head_attention(q, k, v, 4, blocks));
  }
}
BENCHMARK(BM_Attention)->RangeMultiplier(2)->Range(16, 256);

struct Fixture {
  TaskData data;
  ModelConfig cfg;
  EntityModel<float> model;
  std::vector<EncodedSample> encoded;

  explicit Fixture(std::size_t m) {
    TaskConfig tc;
    tc.n_samples = 64;
    tc.m_min = m;
    tc.m_max = m;
    data = prepare_task(tc, 1);
    cfg.vocab_size = data.vocab.size();
    cfg.dropout = 0.0;
    model = EntityModel<float>(cfg, 1);
    encoded = encode_dataset(data.all, data.vocab, dynamic_encode_options(cfg));
  }
};

void BM_TrainStep(benchmark::State& state) {
  Fixture f(16);
  std::vector<const EncodedSample*> batch;
  for (std::size_t i = 0; i < 16; ++i) {
    batch.push_back(&f.encoded[i]);
  }
  for (auto _ : state) {
    ForwardContext ctx;
    auto loss = f.model.loss(batch, ctx);
    loss.backward();
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_GreedyDecode(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& e = f.encoded[i++ % f.encoded.size()];
    ModelStepper<float> stepper(f.model, e);
    benchmark::DoNotOptimize(greedy_search(stepper, 32));
  }
}
BENCHMARK(BM_GreedyDecode)->Arg(4)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_BeamDecode(benchmark::State& state) {
  Fixture f(16);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& e = f.encoded[i++ % f.encoded.size()];
    ModelStepper<float> stepper(f.model, e);
    benchmark::DoNotOptimize(beam_search(stepper, static_cast<std::size_t>(state.range(0)), 32));
  }
}
BENCHMARK(BM_BeamDecode)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
