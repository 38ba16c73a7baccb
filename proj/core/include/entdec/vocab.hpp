#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace entdec {

/// Splits on whitespace, then into maximal runs of word characters
/// (ASCII alphanumerics and any byte >= 0x80) and maximal runs of other
/// punctuation. '_' is always a token of its own, so snake_case names
/// decompose into in-vocabulary pieces.
std::vector<std::string> tokenize(std::string_view text);

/// Joins tokens with single spaces.
std::string join_tokens(std::span<const std::string> tokens);

/// Whitespace normalization used by metrics: tokenize, then join.
std::string normalize_text(std::string_view text);

/// Token <-> id bijection with fixed special ids.
class Vocabulary {
 public:
  static constexpr std::int64_t pad_id = 0;
  static constexpr std::int64_t bos_id = 1;
  static constexpr std::int64_t eos_id = 2;
  static constexpr std::int64_t unk_id = 3;
  static constexpr std::int64_t sep_id = 4;

  Vocabulary();

  /// Closed vocabulary over the tokens of `texts`, ordered by first appearance.
  static Vocabulary build(std::span<const std::string> texts);
  /// Rebuilds from an ordered token list (specials included), e.g. a checkpoint.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::int64_t add(const std::string& token);
  bool contains(std::string_view token) const;
  std::int64_t id(std::string_view token) const;  // unk_id when absent
  const std::string& token(std::int64_t id) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::vector<std::int64_t> encode(std::string_view text) const;
  std::vector<std::int64_t> encode_tokens(std::span<const std::string> tokens) const;
  /// Base ids to text; pad/bos/eos are skipped.
  std::string decode(std::span<const std::int64_t> ids) const;

  /// FNV-1a 64 over the ordered token list.
  std::uint64_t hash() const noexcept;
  std::string hash_hex() const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int64_t> index_;
};

}  // namespace entdec
