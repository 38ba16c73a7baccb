#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "entdec/experiment.hpp"
#include "entdec/metrics.hpp"

namespace entdec {

using Preamble = std::vector<std::pair<std::string, std::string>>;

struct MethodSummary {
  std::string method;
  std::size_t n = 0;
  std::size_t n_acc = 0;  // samples with a nonempty gold set
  double acc = 0.0;
  double em = 0.0;
  double chrf = 0.0;
  std::size_t truncated = 0;
};

/// One entry per method, in first-appearance order. The CSV form is long:
/// one row per method and metric.
std::vector<MethodSummary> summarize(std::span<const EvalRecord> records);

/// Bucket label for a count: "1", "2", "3" or "4+" ("0" for none).
std::string count_bucket(std::size_t count);

struct BucketRow {
  std::string method;
  std::string bucket;
  std::size_t n = 0;
  ConfidenceInterval acc;
};

/// Mean retrieval accuracy per gold-entity-count bucket with a bootstrap
/// interval. Samples without gold entities are skipped.
std::vector<BucketRow> bucket_accuracy(std::span<const EvalRecord> records, std::size_t resamples = 1000,
                                       double level = 0.90, std::uint64_t seed = 0);

void write_records_csv(const std::filesystem::path& path, std::span<const EvalRecord> records,
                       const Preamble& preamble = {});
void write_summary_csv(const std::filesystem::path& path, std::span<const MethodSummary> rows,
                       const Preamble& preamble = {});
void write_buckets_csv(const std::filesystem::path& path, std::span<const BucketRow> rows,
                       const Preamble& preamble = {});

/// Quotes a CSV field when it holds a comma, quote or newline.
std::string csv_field(const std::string& text);

}  // namespace entdec
