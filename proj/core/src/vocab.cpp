#include "entdec/vocab.hpp"

#include <cstdio>

#include "entdec/errors.hpp"

namespace entdec {

namespace {

enum class CharKind { space, word, underscore, punct };

CharKind classify(unsigned char c) {
  if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
    return CharKind::space;
  }
  if (c == '_') {
    return CharKind::underscore;
  }
  if ((c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80) {
    return CharKind::word;
  }
  return CharKind::punct;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const CharKind kind = classify(static_cast<unsigned char>(text[i]));
    if (kind == CharKind::space) {
      ++i;
      continue;
    }
    if (kind == CharKind::underscore) {
      out.emplace_back("_");
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < text.size() && classify(static_cast<unsigned char>(text[j])) == kind) {
      ++j;
    }
    out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) {
      out += ' ';
    }
    out += tokens[i];
  }
  return out;
}

std::string normalize_text(std::string_view text) {
  const auto toks = tokenize(text);
  return join_tokens(toks);
}

Vocabulary::Vocabulary() {
  for (const char* s : {"<pad>", "<bos>", "<eos>", "<unk>", "<sep>"}) {
    add(s);
  }
}

Vocabulary Vocabulary::build(std::span<const std::string> texts) {
  Vocabulary v;
  for (const auto& text : texts) {
    for (const auto& tok : tokenize(text)) {
      v.add(tok);
    }
  }
  return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  if (tokens.size() < v.size()) {
    throw DataError("vocabulary: token list is shorter than the reserved ids");
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (tokens[i] != v.tokens_[i]) {
      throw DataError("vocabulary: reserved id " + std::to_string(i) + " is '" + tokens[i] + "'");
    }
  }
  for (std::size_t i = v.size(); i < tokens.size(); ++i) {
    if (v.contains(tokens[i])) {
      throw DataError("vocabulary: duplicate token '" + tokens[i] + "'");
    }
    v.add(tokens[i]);
  }
  return v;
}

std::int64_t Vocabulary::add(const std::string& token) {
  if (auto it = index_.find(token); it != index_.end()) {
    return it->second;
  }
  const auto id = static_cast<std::int64_t>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

std::int64_t Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? unk_id : it->second;
}

const std::string& Vocabulary::token(std::int64_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("token id " + std::to_string(id) + " outside vocabulary of size " +
                     std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::int64_t> Vocabulary::encode(std::string_view text) const {
  const auto toks = tokenize(text);
  return encode_tokens(toks);
}

std::vector<std::int64_t> Vocabulary::encode_tokens(std::span<const std::string> tokens) const {
  std::vector<std::int64_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    ids.push_back(id(t));
  }
  return ids;
}

std::string Vocabulary::decode(std::span<const std::int64_t> ids) const {
  std::vector<std::string> toks;
  for (auto id : ids) {
    if (id == pad_id || id == bos_id || id == eos_id) {
      continue;
    }
    toks.push_back(token(id));
  }
  return join_tokens(toks);
}

std::uint64_t Vocabulary::hash() const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (const auto& t : tokens_) {
    for (char c : t) {
      mix(static_cast<unsigned char>(c));
    }
    mix(0);
  }
  return h;
}

std::string Vocabulary::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

}  // namespace entdec
