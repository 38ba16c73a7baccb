#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "entdec/sample.hpp"

namespace entdec {

/// |pred ∩ gold| / |gold| with set semantics (duplicates count once).
/// Throws UsageError for an empty gold set.
double retrieval_acc(std::span<const std::size_t> pred, std::span<const std::size_t> gold);

/// 1 when the strings agree after whitespace normalization.
double exact_match(std::string_view pred, std::string_view gold);

/// Character n-gram F-score over whitespace-stripped strings, n = 1..6,
/// precision and recall averaged over the orders both strings reach,
/// combined with beta = 2. Two empty strings score 1.
double chrf(std::string_view pred, std::string_view gold, int max_order = 6, double beta = 2.0);

/// Entities whose full name occurs in `output` as a whole-token run,
/// longest names matched first; sorted distinct indices.
std::vector<std::size_t> find_entity_mentions(std::string_view output, std::span<const Entity> entities);

/// Re-tokenizes `output`, turning every entity name occurrence into
/// dynamic id V + j and the remaining tokens into base ids.
std::vector<std::int64_t> remark_entities(std::string_view output, const Vocabulary& vocab,
                                          std::span<const Entity> entities);

struct ConfidenceInterval {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile bootstrap of the mean (resamples with replacement, seeded);
/// the interval is widened to contain the sample mean if needed.
ConfidenceInterval bootstrap_ci(std::span<const double> values, std::size_t resamples = 1000,
                                double level = 0.90, std::uint64_t seed = 0);

}  // namespace entdec
