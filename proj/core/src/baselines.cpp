#include "entdec/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "entdec/errors.hpp"

namespace entdec {

std::string_view to_string(BaselineKind k) noexcept {
  switch (k) {
    case BaselineKind::none:
      return "none";
    case BaselineKind::input_only:
      return "input_only";
    case BaselineKind::topk:
      return "topk";
    case BaselineKind::our_retrieval:
      return "our_retrieval";
    case BaselineKind::oracle:
      return "oracle";
  }
  return "none";
}

BaselineKind parse_baseline_kind(std::string_view text) {
  for (auto k : {BaselineKind::none, BaselineKind::input_only, BaselineKind::topk, BaselineKind::our_retrieval,
                 BaselineKind::oracle}) {
    if (text == to_string(k)) {
      return k;
    }
  }
  throw UsageError("unknown baseline '" + std::string(text) + "'");
}

std::vector<double> tfidf_scores(std::string_view x, std::span<const Entity> entities) {
  const std::size_t m = entities.size();
  std::vector<std::map<std::string, double>> tf(m);
  std::map<std::string, std::size_t> df;
  for (std::size_t j = 0; j < m; ++j) {
    for (auto& t : tokenize(entities[j].description)) {
      tf[j][t] += 1.0;
    }
    for (const auto& [t, c] : tf[j]) {
      ++df[t];
    }
  }
  auto idf = [&](const std::string& t) {
    auto it = df.find(t);
    const double d = it == df.end() ? 0.0 : static_cast<double>(it->second);
    return std::log((1.0 + static_cast<double>(m)) / (1.0 + d)) + 1.0;
  };
  std::map<std::string, double> q;
  for (auto& t : tokenize(x)) {
    q[t] += 1.0;
  }
  double q_norm = 0.0;
  for (auto& [t, c] : q) {
    c *= idf(t);
    q_norm += c * c;
  }
  q_norm = std::sqrt(q_norm);

  std::vector<double> scores(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    double dot = 0.0;
    double norm = 0.0;
    for (const auto& [t, c] : tf[j]) {
      const double w = c * idf(t);
      norm += w * w;
      if (auto it = q.find(t); it != q.end()) {
        dot += w * it->second;
      }
    }
    if (dot > 0.0 && norm > 0.0 && q_norm > 0.0) {
      scores[j] = dot / (std::sqrt(norm) * q_norm);
    }
  }
  return scores;
}

std::vector<std::size_t> topk_similar(std::string_view x, std::span<const Entity> entities, std::size_t k) {
  if (k == 0) {
    throw UsageError("top-k needs k >= 1");
  }
  const auto scores = tfidf_scores(x, entities);
  std::vector<std::size_t> idx(entities.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&scores](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

BaselineInput build_baseline_input(const Sample& s, BaselineKind kind, std::size_t k,
                                   std::span<const std::size_t> selection, std::size_t max_input_tokens) {
  BaselineInput out;
  switch (kind) {
    case BaselineKind::none:
      throw UsageError("build_baseline_input: 'none' is the dynamic model, not a baseline");
    case BaselineKind::input_only:
      break;
    case BaselineKind::topk:
      out.selected = topk_similar(s.input, s.entities, k);
      break;
    case BaselineKind::our_retrieval:
      out.selected.assign(selection.begin(), selection.end());
      break;
    case BaselineKind::oracle:
      out.selected = s.gold();
      break;
  }
  for (auto j : out.selected) {
    if (j >= s.entities.size()) {
      throw IndexError("sample '" + s.id + "': selected entity " + std::to_string(j) + " out of range");
    }
  }
  std::string input = s.input;
  for (auto j : out.selected) {
    input += " ";
    input += kAppendSeparator;
    input += " " + s.entities[j].name + " : " + s.entities[j].description;
  }
  if (max_input_tokens > 0) {
    auto toks = tokenize(input);
    if (toks.size() > max_input_tokens) {
      toks.resize(max_input_tokens);
      out.truncated = true;
    }
    input = join_tokens(toks);
  }
  out.sample.id = s.id;
  out.sample.input = std::move(input);
  out.sample.target = render_target_names(s);
  out.sample.entities = s.entities;
  return out;
}

}  // namespace entdec
