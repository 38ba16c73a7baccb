#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "entdec/vocab.hpp"

namespace entdec {

struct Entity {
  std::string name;
  std::string description;

  bool operator==(const Entity&) const = default;
};

/// One target token: either plain text or a reference to entity `entity`.
struct TargetToken {
  std::string text;
  std::int64_t entity = -1;

  bool is_entity() const noexcept { return entity >= 0; }
  bool operator==(const TargetToken&) const = default;
};

/// Marker text for entity j inside stored targets.
std::string entity_marker(std::size_t j);

/// Tokenizes a target, turning every marker into an entity token.
std::vector<TargetToken> parse_target(std::string_view target);

struct Sample {
  std::string id;
  std::string input;
  std::string target;
  std::vector<Entity> entities;

  /// Sorted distinct marker indices of the target.
  std::vector<std::size_t> gold() const;
  /// Prefix of the id before '/', used to keep related samples in one split.
  std::string group() const;
  /// Throws DataError naming the sample on bad markers, empty or duplicate names.
  void validate() const;

  bool operator==(const Sample&) const = default;
};

using Dataset = std::vector<Sample>;

/// Target text with every marker replaced by the entity's name.
std::string render_target_names(const Sample& s);

/// Target as dynamic ids: base tokens through `vocab`, entity j as V + j.
std::vector<std::int64_t> target_dynamic_ids(const Sample& s, const Vocabulary& vocab);

std::string sample_to_json(const Sample& s);
Sample sample_from_json(std::string_view line);

void save_jsonl(const Dataset& data, const std::filesystem::path& path);
Dataset load_jsonl(const std::filesystem::path& path);

/// Every text the closed vocabulary must cover: inputs, targets (markers
/// removed), entity names and descriptions.
std::vector<std::string> corpus_texts(const Dataset& data);

/// Closed vocabulary over corpus_texts plus the separators baselines use.
Vocabulary build_vocabulary(const Dataset& data);

}  // namespace entdec
