#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "entdec/baselines.hpp"
#include "entdec/errors.hpp"
#include "entdec/experiment.hpp"
#include "entdec/metrics.hpp"
#include "entdec/report.hpp"
#include "entdec/rng.hpp"
#include "entdec/tasks.hpp"
#include "entdec/vocab.hpp"

using namespace entdec;
namespace fs = std::filesystem;

namespace {

std::string random_word(Rng& rng, const std::vector<std::string>& pool) { return pool[rng.below(pool.size())]; }

// Dense-vector cosine over an explicit term list.
std::vector<double> brute_cosine(const std::string& x, const std::vector<Entity>& ents) {
  std::vector<std::vector<std::string>> docs;
  std::set<std::string> terms;
  for (const auto& e : ents) {
    docs.push_back(tokenize(e.description));
    terms.insert(docs.back().begin(), docs.back().end());
  }
  const auto q = tokenize(x);
  terms.insert(q.begin(), q.end());
  const double m = static_cast<double>(ents.size());
  std::vector<std::string> vocab(terms.begin(), terms.end());
  auto weights = [&](const std::vector<std::string>& toks) {
    std::vector<double> w(vocab.size(), 0.0);
    for (std::size_t i = 0; i < vocab.size(); ++i) {
      double df = 0.0;
      for (const auto& d : docs) {
        df += std::find(d.begin(), d.end(), vocab[i]) != d.end() ? 1.0 : 0.0;
      }
      const double tf = static_cast<double>(std::count(toks.begin(), toks.end(), vocab[i]));
      w[i] = tf * (std::log((1.0 + m) / (1.0 + df)) + 1.0);
    }
    return w;
  };
  const auto qw = weights(q);
  std::vector<double> out;
  for (const auto& d : docs) {
    const auto dw = weights(d);
    double dot = 0.0;
    double a = 0.0;
    double b = 0.0;
    for (std::size_t i = 0; i < vocab.size(); ++i) {
      dot += qw[i] * dw[i];
      a += qw[i] * qw[i];
      b += dw[i] * dw[i];
    }
    out.push_back(a > 0 && b > 0 ? dot / std::sqrt(a * b) : 0.0);
  }
  return out;
}

// Scans the space-joined output for " name " at every token boundary,
// preferring the longest name that starts there.
std::vector<std::size_t> mention_oracle(const std::string& output, const std::vector<Entity>& ents) {
  const std::string text = " " + normalize_text(output) + " ";
  std::set<std::size_t> found;
  std::size_t pos = 0;
  while (pos + 1 < text.size()) {
    std::size_t best_len = 0;
    std::size_t best = 0;
    for (std::size_t j = 0; j < ents.size(); ++j) {
      const std::string needle = " " + normalize_text(ents[j].name) + " ";
      if (text.compare(pos, needle.size(), needle) == 0 && needle.size() > best_len) {
        best_len = needle.size();
        best = j;
      }
    }
    if (best_len > 0) {
      found.insert(best);
      pos += best_len - 1;
    } else {
      pos = text.find(' ', pos + 1);
    }
  }
  return {found.begin(), found.end()};
}

}  // namespace

TEST(RetrievalAcc, Examples) {
  const std::vector<std::size_t> ab{0, 1};
  const std::vector<std::size_t> ac{0, 2};
  EXPECT_EQ(retrieval_acc(ab, ac), 0.5);
  EXPECT_EQ(retrieval_acc(ac, ac), 1.0);
  EXPECT_EQ(retrieval_acc({}, ac), 0.0);
  EXPECT_THROW(retrieval_acc(ab, {}), UsageError);
}

TEST(RetrievalAcc, SetSemanticsProperty) {
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    std::vector<std::size_t> p(rng.below(8));
    std::vector<std::size_t> g(1 + rng.below(6));
    for (auto& v : p) {
      v = rng.below(8);
    }
    for (auto& v : g) {
      v = rng.below(8);
    }
    const double a = retrieval_acc(p, g);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
    auto p2 = p;
    auto g2 = g;
    rng.shuffle(p2);
    rng.shuffle(g2);
    if (!p2.empty()) {
      p2.push_back(p2.front());
    }
    EXPECT_EQ(retrieval_acc(p2, g2), a);
  }
}

TEST(ExactMatch, WhitespaceNormalized) {
  EXPECT_EQ(exact_match("a  b\t( c )", "a b ( c )"), 1.0);
  EXPECT_EQ(exact_match("a b", "a c"), 0.0);
}

TEST(Chrf, IdenticalDisjointAndEmpty) {
  EXPECT_DOUBLE_EQ(chrf("select name from t", "select name from t"), 1.0);
  EXPECT_EQ(chrf("aaa", "bbb"), 0.0);
  EXPECT_EQ(chrf("", ""), 1.0);
  EXPECT_EQ(chrf("", "abc"), 0.0);
  EXPECT_EQ(chrf("a b", "ab"), 1.0);
}

TEST(Chrf, MatchesNgramCounterOnRandomPairs) {
  // Counter over all substrings with explicit clipping by min count.
  auto oracle = [](std::string a, std::string b) {
    std::erase_if(a, [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; });
    std::erase_if(b, [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; });
    if (a.empty() && b.empty()) {
      return 1.0;
    }
    double ps = 0.0;
    double rs = 0.0;
    int orders = 0;
    for (std::size_t n = 1; n <= 6 && n <= a.size() && n <= b.size(); ++n) {
      std::map<std::string, int> ca;
      std::map<std::string, int> cb;
      for (std::size_t i = 0; i + n <= a.size(); ++i) {
        ++ca[a.substr(i, n)];
      }
      for (std::size_t i = 0; i + n <= b.size(); ++i) {
        ++cb[b.substr(i, n)];
      }
      double match = 0.0;
      for (const auto& [g, c] : ca) {
        match += std::min(c, cb.count(g) ? cb[g] : 0);
      }
      ps += match / static_cast<double>(a.size() - n + 1);
      rs += match / static_cast<double>(b.size() - n + 1);
      ++orders;
    }
    if (orders == 0) {
      return 0.0;
    }
    const double p = ps / orders;
    const double r = rs / orders;
    return p + r > 0 ? 5.0 * p * r / (4.0 * p + r) : 0.0;
  };
  Rng rng(2);
  const std::string alphabet = "ab c(_)";
  for (int i = 0; i < 200; ++i) {
    std::string a;
    std::string b;
    for (std::size_t k = 0, n = rng.below(20); k < n; ++k) {
      a += alphabet[rng.below(alphabet.size())];
    }
    for (std::size_t k = 0, n = rng.below(20); k < n; ++k) {
      b += alphabet[rng.below(alphabet.size())];
    }
    EXPECT_NEAR(chrf(a, b), oracle(a, b), 1e-6) << "'" << a << "' vs '" << b << "'";
  }
}

TEST(Mentions, LongestNameWinsAndWholeTokensOnly) {
  const std::vector<Entity> ents{{"get_user", "d"}, {"get_user_name", "d"}, {"user", "d"}};
  EXPECT_EQ(find_entity_mentions("x = get_user_name ( )", ents), (std::vector<std::size_t>{1}));
  EXPECT_EQ(find_entity_mentions("get_user ( ) user", ents), (std::vector<std::size_t>{0, 2}));
  EXPECT_TRUE(find_entity_mentions("get_users", ents).empty());
}

TEST(Mentions, MatchSubstringScanProperty) {
  Rng rng(3);
  const std::vector<std::string> parts{"get", "set", "user", "name", "names", "id"};
  const std::vector<std::string> filler{"(", ")", "x", "=", "return", "name", "_"};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Entity> ents;
    std::set<std::string> names;
    while (ents.size() < 6) {
      std::string n = random_word(rng, parts);
      for (std::size_t k = 0, extra = rng.below(3); k < extra; ++k) {
        n += "_" + random_word(rng, parts);
      }
      if (names.insert(n).second) {
        ents.push_back({n, "d"});
      }
    }
    std::string out;
    for (std::size_t k = 0, n = 1 + rng.below(8); k < n; ++k) {
      out += (rng.bernoulli(0.5) ? ents[rng.below(ents.size())].name : random_word(rng, filler)) + " ";
    }
    EXPECT_EQ(find_entity_mentions(out, ents), mention_oracle(out, ents)) << out;
  }
}

TEST(TopK, ExamplesAndClamp) {
  const std::vector<Entity> ents{{"a", "alpha beta gamma"}, {"b", "total revenue by region"}, {"c", "zeta eta"},
                                 {"d", "beta"}};
  const auto s = tfidf_scores("total revenue by region", ents);
  EXPECT_EQ(topk_similar("total revenue by region", ents, 1), (std::vector<std::size_t>{1}));
  EXPECT_NEAR(s[1], 1.0, 1e-12);
  EXPECT_EQ(s[2], 0.0);
  EXPECT_EQ(topk_similar("nothing shared", ents, 7).size(), 4u);
  EXPECT_EQ(topk_similar("nothing shared", ents, 7), (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(TopK, AgreesWithBruteForceCosine) {
  TaskConfig c;
  c.n_samples = 20;
  const Dataset data = generate(c);
  for (const auto& s : data) {
    const auto fast = tfidf_scores(s.input, s.entities);
    const auto slow = brute_cosine(s.input, s.entities);
    ASSERT_EQ(fast.size(), slow.size());
    for (std::size_t j = 0; j < fast.size(); ++j) {
      EXPECT_NEAR(fast[j], slow[j], 1e-12);
    }
    std::vector<std::size_t> order(slow.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return slow[a] > slow[b] + 1e-12; });
    order.resize(7);
    EXPECT_EQ(topk_similar(s.input, s.entities, 7), order);
  }
}

TEST(BaselineInputs, ConstructionRules) {
  Sample s{"p/1", "do things", "call " + entity_marker(0) + " then " + entity_marker(3),
           {{"e0", "zero"}, {"e1", "one"}, {"e2", "two"}, {"e3", "three"}}};
  const auto oracle = build_baseline_input(s, BaselineKind::oracle, 7);
  EXPECT_EQ(oracle.selected, (std::vector<std::size_t>{0, 3}));
  EXPECT_EQ(oracle.sample.input, "do things | e0 : zero | e3 : three");
  EXPECT_EQ(oracle.sample.target, "call e0 then e3");
  const auto io = build_baseline_input(s, BaselineKind::input_only, 7);
  EXPECT_EQ(io.sample.input, "do things");
  EXPECT_EQ(io.sample.target.find("⟨E:"), std::string::npos);
  EXPECT_EQ(build_baseline_input(s, BaselineKind::topk, 7).selected.size(), 4u);
  const std::vector<std::size_t> sel{2};
  EXPECT_EQ(build_baseline_input(s, BaselineKind::our_retrieval, 7, sel).selected, sel);
  const auto cut = build_baseline_input(s, BaselineKind::oracle, 7, {}, 5);
  EXPECT_TRUE(cut.truncated);
  EXPECT_LE(tokenize(cut.sample.input).size(), 5u);
}

TEST(Bootstrap, ContainsMeanAndReproducible) {
  Rng rng(4);
  std::vector<double> v(57);
  for (auto& x : v) {
    x = rng.uniform();
  }
  const auto a = bootstrap_ci(v, 1000, 0.9, 7);
  const auto b = bootstrap_ci(v, 1000, 0.9, 7);
  EXPECT_EQ(a.lo, b.lo);
  EXPECT_EQ(a.hi, b.hi);
  EXPECT_LE(a.lo, a.mean);
  EXPECT_GE(a.hi, a.mean);
  const std::vector<double> ones(10, 1.0);
  const auto c = bootstrap_ci(ones, 1000, 0.9, 1);
  EXPECT_EQ(c.lo, 1.0);
  EXPECT_EQ(c.hi, 1.0);
}

TEST(Report, BucketsSummaryAndCsv) {
  std::vector<EvalRecord> recs;
  for (std::size_t i = 0; i < 40; ++i) {
    EvalRecord r;
    r.sample_id = "s" + std::to_string(i);
    r.method = i % 2 == 0 ? "a" : "b";
    r.gold_count = 1 + i % 3;  // no 4+ bucket
    r.acc = 1.0;
    r.em = i % 4 == 0 ? 1.0 : 0.0;
    r.chrf = 0.5;
    r.output = "x, \"y\"";
    recs.push_back(r);
  }
  EvalRecord nogold;
  nogold.method = "a";
  nogold.em = 1.0;
  recs.push_back(nogold);
  const auto rows = bucket_accuracy(recs, 1000, 0.9, 3);
  EXPECT_EQ(rows.size(), 6u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.acc.mean, 1.0);
    EXPECT_EQ(r.acc.lo, 1.0);
    EXPECT_EQ(r.acc.hi, 1.0);
    EXPECT_NE(r.bucket, "4+");
  }
  EXPECT_EQ(count_bucket(7), "4+");
  const auto sum = summarize(recs);
  ASSERT_EQ(sum.size(), 2u);
  // Aggregates recompute from the records; the no-gold sample counts for EM only.
  EXPECT_EQ(sum[0].n, 21u);
  EXPECT_EQ(sum[0].n_acc, 20u);
  double em = 0.0;
  for (const auto& r : recs) {
    em += r.method == "a" ? r.em : 0.0;
  }
  EXPECT_DOUBLE_EQ(sum[0].em, em / 21.0);

  const fs::path dir = fs::temp_directory_path() / "entdec_unit_report";
  fs::remove_all(dir);
  const std::vector<std::pair<std::string, std::string>> pre{{"seed", "1"}};
  write_records_csv(dir / "r.csv", recs, pre);
  write_buckets_csv(dir / "b.csv", rows, pre);
  std::ifstream in(dir / "b.csv");
  std::string first;
  std::string header;
  std::getline(in, first);
  std::getline(in, header);
  EXPECT_EQ(first, "# seed=1");
  EXPECT_EQ(header, "method,bucket,n,mean_acc,ci_lo,ci_hi");
  EXPECT_EQ(csv_field("x, \"y\""), "\"x, \"\"y\"\"\"");
}
