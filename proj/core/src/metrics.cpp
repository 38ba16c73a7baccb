#include "entdec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include "entdec/errors.hpp"
#include "entdec/rng.hpp"

namespace entdec {

double retrieval_acc(std::span<const std::size_t> pred, std::span<const std::size_t> gold) {
  const std::set<std::size_t> g(gold.begin(), gold.end());
  if (g.empty()) {
    throw UsageError("retrieval accuracy is undefined for an empty gold set");
  }
  const std::set<std::size_t> p(pred.begin(), pred.end());
  std::size_t hit = 0;
  for (auto x : p) {
    hit += g.count(x);
  }
  return static_cast<double>(hit) / static_cast<double>(g.size());
}

double exact_match(std::string_view pred, std::string_view gold) {
  return normalize_text(pred) == normalize_text(gold) ? 1.0 : 0.0;
}

namespace {

std::string strip_spaces(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c != ' ' && c != '\t' && c != '\n' && c != '\r' && c != '\f' && c != '\v') {
      out += c;
    }
  }
  return out;
}

std::unordered_map<std::string_view, std::size_t> ngram_counts(std::string_view s, std::size_t n) {
  std::unordered_map<std::string_view, std::size_t> counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    ++counts[s.substr(i, n)];
  }
  return counts;
}

}  // namespace

double chrf(std::string_view pred, std::string_view gold, int max_order, double beta) {
  const std::string hyp = strip_spaces(pred);
  const std::string ref = strip_spaces(gold);
  if (hyp.empty() && ref.empty()) {
    return 1.0;
  }
  double p_sum = 0.0;
  double r_sum = 0.0;
  int orders = 0;
  for (int n = 1; n <= max_order; ++n) {
    const auto un = static_cast<std::size_t>(n);
    if (hyp.size() < un || ref.size() < un) {
      continue;
    }
    const auto h = ngram_counts(hyp, un);
    const auto r = ngram_counts(ref, un);
    std::size_t match = 0;
    for (const auto& [gram, c] : h) {
      if (auto it = r.find(gram); it != r.end()) {
        match += std::min(c, it->second);
      }
    }
    p_sum += static_cast<double>(match) / static_cast<double>(hyp.size() - un + 1);
    r_sum += static_cast<double>(match) / static_cast<double>(ref.size() - un + 1);
    ++orders;
  }
  if (orders == 0) {
    return 0.0;
  }
  const double p = p_sum / orders;
  const double r = r_sum / orders;
  if (p + r == 0.0) {
    return 0.0;
  }
  const double b2 = beta * beta;
  return (1.0 + b2) * p * r / (b2 * p + r);
}

namespace {

struct NameTokens {
  std::size_t entity;
  std::vector<std::string> tokens;
};

std::vector<NameTokens> names_longest_first(std::span<const Entity> entities) {
  std::vector<NameTokens> names;
  for (std::size_t j = 0; j < entities.size(); ++j) {
    names.push_back({j, tokenize(entities[j].name)});
  }
  std::stable_sort(names.begin(), names.end(),
                   [](const NameTokens& a, const NameTokens& b) { return a.tokens.size() > b.tokens.size(); });
  return names;
}

/// Walks the tokens; at each position takes the longest entity name that
/// matches there. Calls on_entity(j) or on_token(index) for each piece.
template <typename OnEntity, typename OnToken>
void scan_mentions(const std::vector<std::string>& toks, const std::vector<NameTokens>& names,
                   OnEntity on_entity, OnToken on_token) {
  std::size_t i = 0;
  while (i < toks.size()) {
    bool matched = false;
    for (const auto& n : names) {
      if (n.tokens.empty() || i + n.tokens.size() > toks.size()) {
        continue;
      }
      if (std::equal(n.tokens.begin(), n.tokens.end(), toks.begin() + static_cast<std::ptrdiff_t>(i))) {
        on_entity(n.entity);
        i += n.tokens.size();
        matched = true;
        break;
      }
    }
    if (!matched) {
      on_token(i);
      ++i;
    }
  }
}

}  // namespace

std::vector<std::size_t> find_entity_mentions(std::string_view output, std::span<const Entity> entities) {
  const auto toks = tokenize(output);
  std::set<std::size_t> found;
  scan_mentions(toks, names_longest_first(entities), [&found](std::size_t j) { found.insert(j); },
                [](std::size_t) {});
  return {found.begin(), found.end()};
}

std::vector<std::int64_t> remark_entities(std::string_view output, const Vocabulary& vocab,
                                          std::span<const Entity> entities) {
  const auto toks = tokenize(output);
  const auto V = static_cast<std::int64_t>(vocab.size());
  std::vector<std::int64_t> ids;
  scan_mentions(
      toks, names_longest_first(entities), [&](std::size_t j) { ids.push_back(V + static_cast<std::int64_t>(j)); },
      [&](std::size_t i) { ids.push_back(vocab.id(toks[i])); });
  return ids;
}

ConfidenceInterval bootstrap_ci(std::span<const double> values, std::size_t resamples, double level,
                                std::uint64_t seed) {
  ConfidenceInterval ci;
  if (values.empty()) {
    return ci;
  }
  double total = 0.0;
  for (double v : values) {
    total += v;
  }
  ci.mean = total / static_cast<double>(values.size());
  if (resamples == 0) {
    ci.lo = ci.hi = ci.mean;
    return ci;
  }
  Rng rng(seed);
  std::vector<double> means(resamples);
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      s += values[rng.below(values.size())];
    }
    m = s / static_cast<double>(values.size());
  }
  std::sort(means.begin(), means.end());
  const double tail = (1.0 - level) / 2.0;
  auto quantile = [&means](double q) {
    const double pos = q * static_cast<double>(means.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, means.size() - 1);
    return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
  };
  ci.lo = std::min(quantile(tail), ci.mean);
  ci.hi = std::max(quantile(1.0 - tail), ci.mean);
  return ci;
}

}  // namespace entdec
