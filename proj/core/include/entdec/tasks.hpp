#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "entdec/sample.hpp"

namespace entdec {

enum class TaskKind { funcall, colselect };
enum class NameSimilarity { low, high };

std::string_view to_string(TaskKind k) noexcept;
TaskKind parse_task_kind(std::string_view text);
std::string_view to_string(NameSimilarity s) noexcept;
NameSimilarity parse_name_similarity(std::string_view text);

struct TaskConfig {
  TaskKind task = TaskKind::funcall;
  std::size_t n_samples = 3334;
  std::size_t m_min = 16;  // entities per sample, inclusive range
  std::size_t m_max = 16;
  std::size_t desc_min = 5;  // description length in tokens, inclusive range
  std::size_t desc_max = 40;
  NameSimilarity similarity = NameSimilarity::high;
  std::size_t max_calls = 3;         // entity references per target, at most
  std::size_t samples_per_group = 8;  // mean samples drawn from one project/schema
  std::uint64_t seed = 1;

  /// Throws UsageError for empty ranges or more references than entities.
  void validate() const;

  std::map<std::string, std::string> to_map() const;
  /// Unknown keys are ignored so one config file can carry several sections.
  static TaskConfig from_map(const std::map<std::string, std::string>& kv);
};

/// Function-call completion: input is a docstring naming behaviors, entities
/// are the project's functions with code-like descriptions, the target calls
/// the matching functions.
Dataset gen_funcall(const TaskConfig& config);

/// Column selection: input is a question about a toy schema, entities are
/// table.column names described by sample values, the target is a query.
Dataset gen_colselect(const TaskConfig& config);

Dataset generate(const TaskConfig& config);

/// Phrases a colselect question may use for a column (bare column name,
/// e.g. "country"); empty for unknown columns.
std::vector<std::string> colselect_paraphrases(std::string_view column);

struct SplitRatios {
  unsigned train = 60;
  unsigned dev = 20;
  unsigned test = 20;
};

struct DataSplit {
  Dataset train;
  Dataset dev;
  Dataset test;
};

/// Group-disjoint split (Sample::group): whole groups are assigned to the
/// split with the largest remaining quota, largest groups first, so sizes
/// land on the exact ratio when small groups are available to fill gaps.
DataSplit split_dataset(const Dataset& data, SplitRatios ratios, std::uint64_t seed);

}  // namespace entdec
