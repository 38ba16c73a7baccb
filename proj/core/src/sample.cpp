#include "entdec/sample.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "entdec/errors.hpp"
#include "json.hpp"

namespace entdec {

namespace {

constexpr std::string_view kOpen = "\xE2\x9F\xA8" "E:";  // "⟨E:"
constexpr std::string_view kClose = "\xE2\x9F\xA9";   // "⟩"

}  // namespace

std::string entity_marker(std::size_t j) {
  return std::string(kOpen) + std::to_string(j) + std::string(kClose);
}

std::vector<TargetToken> parse_target(std::string_view target) {
  std::vector<TargetToken> out;
  auto push_text = [&out](std::string_view text) {
    for (auto& t : tokenize(text)) {
      out.push_back({std::move(t), -1});
    }
  };
  std::size_t pos = 0;
  while (pos < target.size()) {
    const std::size_t open = target.find(kOpen, pos);
    if (open == std::string_view::npos) {
      push_text(target.substr(pos));
      break;
    }
    push_text(target.substr(pos, open - pos));
    const std::size_t digits = open + kOpen.size();
    const std::size_t close = target.find(kClose, digits);
    if (close == std::string_view::npos || close == digits) {
      throw DataError("unterminated entity marker at byte " + std::to_string(open));
    }
    std::int64_t j = 0;
    for (std::size_t i = digits; i < close; ++i) {
      const char c = target[i];
      if (c < '0' || c > '9') {
        throw DataError("bad entity marker '" + std::string(target.substr(open, close + kClose.size() - open)) + "'");
      }
      j = j * 10 + (c - '0');
    }
    out.push_back({entity_marker(static_cast<std::size_t>(j)), j});
    pos = close + kClose.size();
  }
  return out;
}

std::vector<std::size_t> Sample::gold() const {
  std::set<std::size_t> g;
  for (const auto& t : parse_target(target)) {
    if (t.is_entity()) {
      g.insert(static_cast<std::size_t>(t.entity));
    }
  }
  return {g.begin(), g.end()};
}

std::string Sample::group() const {
  const auto slash = id.find('/');
  return slash == std::string::npos ? id : id.substr(0, slash);
}

void Sample::validate() const {
  std::vector<TargetToken> toks;
  try {
    toks = parse_target(target);
  } catch (const DataError& e) {
    throw DataError("sample '" + id + "': " + e.what());
  }
  for (const auto& t : toks) {
    if (t.is_entity() && static_cast<std::size_t>(t.entity) >= entities.size()) {
      throw DataError("sample '" + id + "': marker index " + std::to_string(t.entity) + " but only " +
                      std::to_string(entities.size()) + " entities");
    }
  }
  std::set<std::string> names;
  for (const auto& e : entities) {
    if (e.name.empty()) {
      throw DataError("sample '" + id + "': entity with empty name");
    }
    if (tokenize(e.description).empty()) {
      throw DataError("sample '" + id + "': entity '" + e.name + "' has an empty description");
    }
    if (!names.insert(e.name).second) {
      throw DataError("sample '" + id + "': duplicate entity name '" + e.name + "'");
    }
  }
}

std::string render_target_names(const Sample& s) {
  std::vector<std::string> toks;
  for (const auto& t : parse_target(s.target)) {
    if (t.is_entity()) {
      for (auto& n : tokenize(s.entities.at(static_cast<std::size_t>(t.entity)).name)) {
        toks.push_back(std::move(n));
      }
    } else {
      toks.push_back(t.text);
    }
  }
  return join_tokens(toks);
}

std::vector<std::int64_t> target_dynamic_ids(const Sample& s, const Vocabulary& vocab) {
  std::vector<std::int64_t> ids;
  const auto V = static_cast<std::int64_t>(vocab.size());
  for (const auto& t : parse_target(s.target)) {
    if (t.is_entity()) {
      if (static_cast<std::size_t>(t.entity) >= s.entities.size()) {
        throw DataError("sample '" + s.id + "': marker index " + std::to_string(t.entity) + " out of range");
      }
      ids.push_back(V + t.entity);
    } else {
      ids.push_back(vocab.id(t.text));
    }
  }
  return ids;
}

std::string sample_to_json(const Sample& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["input"] = s.input;
  j["target"] = s.target;
  j["entities"] = nlohmann::ordered_json::array();
  for (const auto& e : s.entities) {
    nlohmann::ordered_json ej;
    ej["name"] = e.name;
    ej["description"] = e.description;
    j["entities"].push_back(std::move(ej));
  }
  return j.dump();
}

Sample sample_from_json(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  if (!j.is_object()) {
    throw DataError("expected a JSON object");
  }
  Sample s;
  s.id = j.at("id").get<std::string>();
  s.input = j.at("input").get<std::string>();
  s.target = j.at("target").get<std::string>();
  for (const auto& e : j.at("entities")) {
    s.entities.push_back({e.at("name").get<std::string>(), e.at("description").get<std::string>()});
  }
  return s;
}

void save_jsonl(const Dataset& data, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot write " + path.string());
  }
  for (const auto& s : data) {
    out << sample_to_json(s) << '\n';
  }
}

Dataset load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot read " + path.string());
  }
  Dataset data;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    Sample s;
    try {
      s = sample_from_json(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    s.validate();
    data.push_back(std::move(s));
  }
  return data;
}

std::vector<std::string> corpus_texts(const Dataset& data) {
  std::vector<std::string> texts;
  for (const auto& s : data) {
    texts.push_back(s.input);
    std::vector<std::string> toks;
    for (const auto& t : parse_target(s.target)) {
      if (!t.is_entity()) {
        toks.push_back(t.text);
      }
    }
    texts.push_back(join_tokens(toks));
    for (const auto& e : s.entities) {
      texts.push_back(e.name);
      texts.push_back(e.description);
    }
  }
  return texts;
}

Vocabulary build_vocabulary(const Dataset& data) {
  Vocabulary v = Vocabulary::build(corpus_texts(data));
  v.add(":");
  v.add("|");
  return v;
}

}  // namespace entdec
