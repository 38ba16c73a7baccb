#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "entdec/sample.hpp"

namespace entdec {

enum class BaselineKind {
  none,           // the dynamic-vocabulary model itself
  input_only,     // p(y | x), entity names generated token by token
  topk,           // x plus the k descriptions most similar to x
  our_retrieval,  // x plus the entities the dynamic model used
  oracle,         // x plus the gold entities
};

std::string_view to_string(BaselineKind k) noexcept;
BaselineKind parse_baseline_kind(std::string_view text);

/// TF-IDF cosine between x and each description. IDF is computed over the
/// sample's descriptions with smoothing: ln((1 + M) / (1 + df)) + 1.
std::vector<double> tfidf_scores(std::string_view x, std::span<const Entity> entities);

/// Indices of the k best scores, ties to the lower index; k is clamped to M.
std::vector<std::size_t> topk_similar(std::string_view x, std::span<const Entity> entities, std::size_t k);

struct BaselineInput {
  Sample sample;                       // rewritten input, target with names in place of markers
  std::vector<std::size_t> selected;   // appended entities, in append order
  bool truncated = false;
};

/// Separator between the input and each appended "name : description".
inline constexpr std::string_view kAppendSeparator = "|";

/// Builds the generator-only view of a sample for a baseline. `selection`
/// supplies the entities for our_retrieval. A nonzero max_input_tokens
/// truncates the appended input (recorded in `truncated`).
BaselineInput build_baseline_input(const Sample& s, BaselineKind kind, std::size_t k,
                                   std::span<const std::size_t> selection = {}, std::size_t max_input_tokens = 0);

}  // namespace entdec
