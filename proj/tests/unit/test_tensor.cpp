#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "entdec/errors.hpp"
#include "entdec/gradcheck.hpp"
#include "entdec/ops.hpp"
#include "entdec/optim.hpp"
#include "entdec/rng.hpp"

using namespace entdec;

namespace {

Tensor<double> random_matrix(Rng& rng, std::size_t r, std::size_t c, bool grad = true) {
  std::vector<double> v(r * c);
  for (auto& x : v) {
    x = rng.normal(0.0, 1.0);
  }
  return Tensor<double>::from({r, c}, std::move(v), grad);
}

Tensor<double> weighted(const Tensor<double>& x, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(x.numel());
  for (auto& v : w) {
    v = rng.normal(0.0, 1.0);
  }
  return sum(mul(x, Tensor<double>::from(x.shape(), std::move(w))));
}

GradCheckOptions tight() {
  GradCheckOptions o;
  o.step = 1e-4;
  o.tolerance = 1e-5;
  return o;
}

}  // namespace

TEST(Matmul, IdentityAndHandArithmetic) {
  Rng rng(1);
  auto a = random_matrix(rng, 3, 3, false);
  auto eye = Tensor<double>::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto p = matmul(a, eye);
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_EQ(p[i], a[i]);
  }
  auto c = matmul(Tensor<double>::from({2, 2}, {1, 2, 3, 4}), Tensor<double>::from({2, 1}, {1, 1}));
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(c[0], 3.0);
  EXPECT_EQ(c[1], 7.0);
}

TEST(Matmul, ShapeMismatchThrows) {
  auto a = Tensor<double>::zeros({2, 3});
  auto b = Tensor<double>::zeros({2, 3});
  EXPECT_THROW(matmul(a, b), DimensionError);
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  auto a = random_matrix(rng, 4, 5);
  auto b = random_matrix(rng, 5, 3);
  auto rep = gradcheck<double>([&] { return weighted(matmul(a, b), 9); }, {{"a", a}, {"b", b}}, tight());
  EXPECT_TRUE(rep.passed) << rep.max_rel_error;
}

TEST(Matmul, BackwardIsOuterProducts) {
  auto a = Tensor<double>::from({1, 2}, {2, 3}, true);
  auto b = Tensor<double>::from({2, 1}, {5, 7}, true);
  sum(matmul(a, b)).backward();
  EXPECT_EQ(a.grad()[0], 5.0);
  EXPECT_EQ(a.grad()[1], 7.0);
  EXPECT_EQ(b.grad()[0], 2.0);
  EXPECT_EQ(b.grad()[1], 3.0);
}

TEST(Softmax, UniformOnZeroRow) {
  auto p = softmax(Tensor<double>::zeros({1, 6}), 1);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_NEAR(p[i], 1.0 / 6.0, 1e-15);
  }
}

TEST(Softmax, ShiftInvariantAndNormalizedProperty) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t r = 1 + rng.below(5);
    const std::size_t c = 1 + rng.below(9);
    auto x = random_matrix(rng, r, c, false);
    const double shift = rng.uniform(-50, 50);
    std::vector<double> shifted(x.data().begin(), x.data().end());
    for (auto& v : shifted) {
      v += shift;
    }
    auto p = softmax(x, 1);
    auto q = softmax(Tensor<double>::from({r, c}, shifted), 1);
    for (std::size_t i = 0; i < r; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        EXPECT_GE(p.at(i, j), 0.0);
        EXPECT_NEAR(p.at(i, j), q.at(i, j), 1e-6);
        total += p.at(i, j);
      }
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
  }
}

TEST(Softmax, StableOnHugeLogits) {
  auto p = softmax(Tensor<float>::from({1, 3}, {1000.0f, 1000.0f, -1000.0f}), 1);
  EXPECT_NEAR(p[0], 0.5f, 1e-6);
  EXPECT_EQ(p[2], 0.0f);
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  auto x = random_matrix(rng, 3, 5);
  auto rep = gradcheck<double>([&] { return weighted(softmax(x, 1), 5); }, {{"x", x}}, tight());
  EXPECT_TRUE(rep.passed) << rep.max_rel_error;
}

TEST(LayerNorm, ConstantRowGivesZeros) {
  auto x = Tensor<double>::full({2, 4}, 3.5);
  auto y = layer_norm(x, Tensor<double>::full({4}, 1.0), Tensor<double>::zeros({4}), 1e-5);
  for (std::size_t i = 0; i < y.numel(); ++i) {
    EXPECT_EQ(y[i], 0.0);
  }
}

TEST(LayerNorm, StatisticsMatchAffineParameters) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 16 + rng.below(48);
    auto x = random_matrix(rng, 3, d, false);
    const double g = rng.uniform(0.5, 2.0);
    const double b = rng.uniform(-1.0, 1.0);
    auto y = layer_norm(x, Tensor<double>::full({d}, g), Tensor<double>::full({d}, b), 1e-5);
    for (std::size_t r = 0; r < 3; ++r) {
      double mean = 0.0;
      double sq = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        mean += y.at(r, c);
      }
      mean /= static_cast<double>(d);
      for (std::size_t c = 0; c < d; ++c) {
        sq += (y.at(r, c) - mean) * (y.at(r, c) - mean);
      }
      EXPECT_NEAR(mean, b, 1e-4);
      EXPECT_NEAR(std::sqrt(sq / static_cast<double>(d)), g, 1e-4 * g + 1e-4);
    }
  }
}

TEST(LayerNorm, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  auto x = random_matrix(rng, 3, 6);
  auto g = random_matrix(rng, 1, 6);
  auto b = random_matrix(rng, 1, 6);
  auto rep = gradcheck<double>([&] { return weighted(layer_norm(x, g, b, 1e-5), 7); },
                               {{"x", x}, {"g", g}, {"b", b}}, tight());
  EXPECT_TRUE(rep.passed) << rep.max_rel_error;
}

TEST(MaxPool, HandCases) {
  auto same = Tensor<double>::from({3, 2}, {1, 2, 1, 2, 1, 2});
  auto p = max_pool_rows(same);
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[1], 2.0);
  auto q = max_pool_rows(Tensor<double>::from({2, 2}, {1, 5, 3, 2}));
  EXPECT_EQ(q[0], 3.0);
  EXPECT_EQ(q[1], 5.0);
}

TEST(MaxPool, GradientRoutesToArgmax) {
  auto x = Tensor<double>::from({2, 2}, {1, 5, 3, 2}, true);
  sum(max_pool_rows(x)).backward();
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{0, 1, 1, 0}));
}

TEST(Gather, GradientCountsOccurrences) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t rows = 2 + rng.below(6);
    auto table = random_matrix(rng, rows, 3);
    std::vector<std::int64_t> ids(1 + rng.below(12));
    for (auto& id : ids) {
      id = static_cast<std::int64_t>(rng.below(rows));
    }
    sum(embedding_gather(table, ids)).backward();
    for (std::size_t r = 0; r < rows; ++r) {
      const auto count = static_cast<double>(std::count(ids.begin(), ids.end(), static_cast<std::int64_t>(r)));
      for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_EQ(table.grad()[r * 3 + c], count);
      }
    }
  }
}

TEST(Gather, OutOfRangeThrows) {
  auto table = Tensor<double>::zeros({3, 2});
  const std::vector<std::int64_t> ids{3};
  EXPECT_THROW(gather_rows(table, ids), IndexError);
}

TEST(ConcatRelu, Basics) {
  auto a = Tensor<double>::from({1, 2}, {-1, 2});
  auto b = Tensor<double>::from({1, 2}, {3, -4});
  auto c = concat_rows(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 2}));
  auto r = relu(c);
  EXPECT_EQ(std::vector<double>(r.data().begin(), r.data().end()), (std::vector<double>{0, 2, 3, 0}));
  EXPECT_THROW(concat_rows(a, Tensor<double>::zeros({1, 3})), DimensionError);
}

TEST(Backward, ScalarProductAndAccumulation) {
  auto x = Tensor<double>::scalar(3.0, true);
  auto y = Tensor<double>::scalar(-2.5, true);
  auto loss = mul(x, y);
  loss.backward();
  EXPECT_EQ(x.grad()[0], -2.5);
  loss.backward();
  EXPECT_EQ(x.grad()[0], -5.0);
  EXPECT_EQ(y.grad()[0], 6.0);
}

TEST(Backward, NonScalarThrowsAndUnreachedIsZero) {
  auto x = Tensor<double>::from({2}, {1, 2}, true);
  auto unused = Tensor<double>::from({2}, {1, 2}, true);
  EXPECT_THROW(scale(x, 2.0).backward(), UsageError);
  sum(x).backward();
  EXPECT_EQ(unused.grad()[0], 0.0);
  EXPECT_EQ(unused.grad()[1], 0.0);
}

TEST(CrossEntropy, IgnoresNegativeTargetsAndMaskedColumns) {
  const double inf = std::numeric_limits<double>::infinity();
  auto logits = Tensor<double>::from({2, 3}, {0, 0, -inf, 5, 1, 2});
  const std::vector<std::int64_t> t{1, -1};
  EXPECT_NEAR(cross_entropy(logits, t).item(), std::log(2.0), 1e-15);
}

TEST(Attention, SingletonKeyReturnsValueRow) {
  Rng rng(8);
  auto q = random_matrix(rng, 4, 4, false);
  auto k = random_matrix(rng, 1, 4, false);
  auto v = random_matrix(rng, 1, 4, false);
  const std::vector<AttentionBlock> blocks{{0, 4, 0, 1, false}};
  auto out = multi_head_attention(q, k, v, 2, blocks);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_NEAR(out.at(r, c), v[c], 1e-12);
    }
  }
}

TEST(Attention, IdenticalKeysAverageValues) {
  Rng rng(9);
  auto q = random_matrix(rng, 2, 4, false);
  auto row = random_matrix(rng, 1, 4, false);
  auto k = concat_rows(concat_rows(row, row), row);
  auto v = random_matrix(rng, 3, 4, false);
  const std::vector<AttentionBlock> blocks{{0, 2, 0, 3, false}};
  auto out = multi_head_attention(q, k, v, 1, blocks);
  for (std::size_t c = 0; c < 4; ++c) {
    const double mean = (v.at(0, c) + v.at(1, c) + v.at(2, c)) / 3.0;
    EXPECT_NEAR(out.at(0, c), mean, 1e-12);
    EXPECT_NEAR(out.at(1, c), mean, 1e-12);
  }
}

TEST(Attention, CausalRowsIgnoreLaterKeys) {
  Rng rng(10);
  auto q = random_matrix(rng, 5, 4, false);
  auto k = random_matrix(rng, 5, 4, false);
  auto v = random_matrix(rng, 5, 4, false);
  const std::vector<AttentionBlock> blocks{{0, 5, 0, 5, true}};
  auto base = multi_head_attention(q, k, v, 2, blocks);
  for (std::size_t t = 0; t < 5; ++t) {
    std::vector<double> kv(k.data().begin(), k.data().end());
    std::vector<double> vv(v.data().begin(), v.data().end());
    for (std::size_t j = (t + 1) * 4; j < kv.size(); ++j) {
      kv[j] += 3.0;
      vv[j] -= 2.0;
    }
    auto out = multi_head_attention(q, Tensor<double>::from({5, 4}, kv), Tensor<double>::from({5, 4}, vv), 2, blocks);
    for (std::size_t r = 0; r <= t; ++r) {
      for (std::size_t c = 0; c < 4; ++c) {
        EXPECT_EQ(out.at(r, c), base.at(r, c));
      }
    }
  }
}

TEST(Attention, FullyMaskedRowIsZeroAndFlagged) {
  Rng rng(11);
  auto q = random_matrix(rng, 1, 4, false);
  auto k = random_matrix(rng, 2, 4, false);
  auto v = random_matrix(rng, 2, 4, false);
  const std::vector<AttentionBlock> blocks{{0, 1, 0, 2, false}};
  const std::vector<std::uint8_t> valid{0, 0};
  attention_diagnostics().fully_masked_rows = 0;
  auto out = multi_head_attention(q, k, v, 2, blocks, valid);
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_EQ(out[c], 0.0);
  }
  EXPECT_GT(attention_diagnostics().fully_masked_rows, 0u);
}

TEST(Attention, RowsSumToOneOverUnmaskedKeys) {
  // Values = identity columns expose the attention weights directly.
  Rng rng(12);
  auto q = random_matrix(rng, 3, 4, false);
  auto k = random_matrix(rng, 4, 4, false);
  auto v = Tensor<double>::from({4, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
  const std::vector<AttentionBlock> blocks{{0, 3, 0, 4, false}};
  const std::vector<std::uint8_t> valid{1, 0, 1, 1};
  auto w = multi_head_attention(q, k, v, 1, blocks, valid);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(w.at(r, 1), 0.0);
    EXPECT_NEAR(w.at(r, 0) + w.at(r, 2) + w.at(r, 3), 1.0, 1e-12);
  }
}

// Property: random compositions of ops pass the 64-bit finite-difference check.
TEST(GradCheck, RandomCompositionsProperty) {
  Rng rng(13);
  for (int trial = 0; trial < 15; ++trial) {
    const std::size_t n = 2 + rng.below(4);
    const std::size_t d = 2 * (1 + rng.below(3));
    auto x = random_matrix(rng, n, d);
    auto w = random_matrix(rng, d, d);
    auto g = random_matrix(rng, 1, d);
    auto b = random_matrix(rng, 1, d);
    const std::uint64_t seed = rng.next_u64();
    auto fn = [&] {
      auto h = layer_norm(matmul(x, w), g, b, 1e-5);
      auto a = multi_head_attention(h, h, x, 2, std::vector<AttentionBlock>{{0, n, 0, n, trial % 2 == 0}});
      return add(weighted(softmax(a, 1), seed), weighted(max_pool_rows(relu(h)), seed + 1));
    };
    auto rep = gradcheck<double>(fn, {{"x", x}, {"w", w}, {"g", g}, {"b", b}}, tight());
    EXPECT_TRUE(rep.passed) << "trial " << trial << " rel " << rep.max_rel_error;
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Rng rng(14);
  auto p = random_matrix(rng, 3, 4);
  auto grad = p.mutable_grad();
  for (std::size_t i = 0; i < grad.size(); ++i) {
    grad[i] = rng.uniform(1e-4, 10.0) * (rng.bernoulli(0.5) ? 1 : -1);
  }
  const std::vector<double> before(p.data().begin(), p.data().end());
  const std::vector<double> g(grad.begin(), grad.end());
  std::vector<Tensor<double>> params{p};
  AdamState<double> st;
  const double lr = 1e-3;
  adam_step<double>(params, st, lr);
  EXPECT_EQ(st.step, 1);
  for (std::size_t i = 0; i < before.size(); ++i) {
    const double delta = p.data()[i] - before[i];
    EXPECT_LT(delta * g[i], 0.0);
    EXPECT_GE(std::abs(delta), 0.99 * lr);
    EXPECT_LE(std::abs(delta), lr * (1 + 1e-12));
  }
}

TEST(Adam, StepCounterIncrementsByOne) {
  auto p = Tensor<double>::from({2}, {1, 2}, true);
  std::vector<Tensor<double>> params{p};
  AdamState<double> st;
  for (int i = 1; i <= 5; ++i) {
    p.mutable_grad()[0] = 1.0;
    adam_step<double>(params, st, 1e-2);
    EXPECT_EQ(st.step, i);
    EXPECT_EQ(st.first_moment[0].size(), 2u);
  }
}

TEST(CosineLr, Endpoints) {
  EXPECT_NEAR(cosine_lr(1000, 1000, 1e-3, 0), 0.0, 1e-9);
  EXPECT_NEAR(cosine_lr(100, 1000, 1e-3, 100), 1e-3, 1e-15);
  EXPECT_NEAR(cosine_lr(0, 1000, 1e-4, 0), 1e-4, 1e-15);
  double prev = 1.0;
  for (int s = 100; s <= 1000; s += 50) {
    const double lr = cosine_lr(s, 1000, 1e-3, 100);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
}

TEST(ClipGradNorm, ScalesToMaxNorm) {
  auto a = Tensor<double>::from({2}, {0, 0}, true);
  a.mutable_grad()[0] = 3.0;
  a.mutable_grad()[1] = 4.0;
  std::vector<Tensor<double>> params{a};
  EXPECT_NEAR(clip_grad_norm<double>(params, 1.0), 5.0, 1e-12);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-12);
  EXPECT_NEAR(a.grad()[1], 0.8, 1e-12);
}

TEST(Rng, DeterministicAndForkIndependent) {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.next_u64(), b.next_u64());
  }
  Rng c(42);
  const Rng f = c.fork(1);
  Rng d(42);
  EXPECT_EQ(c.next_u64(), d.next_u64());
  Rng f2 = f;
  EXPECT_NE(f2.next_u64(), Rng(42).next_u64());
  for (int i = 0; i < 1000; ++i) {
    EXPECT_LT(a.below(7), 7u);
    const double u = a.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}
