#include "entdec/tasks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

#include "entdec/errors.hpp"
#include "entdec/rng.hpp"

namespace entdec {

std::string_view to_string(TaskKind k) noexcept {
  return k == TaskKind::funcall ? "funcall" : "colselect";
}

TaskKind parse_task_kind(std::string_view text) {
  if (text == "funcall") {
    return TaskKind::funcall;
  }
  if (text == "colselect") {
    return TaskKind::colselect;
  }
  throw UsageError("unknown task '" + std::string(text) + "' (expected funcall or colselect)");
}

std::string_view to_string(NameSimilarity s) noexcept { return s == NameSimilarity::high ? "high" : "low"; }

NameSimilarity parse_name_similarity(std::string_view text) {
  if (text == "high") {
    return NameSimilarity::high;
  }
  if (text == "low") {
    return NameSimilarity::low;
  }
  throw UsageError("unknown name_similarity '" + std::string(text) + "' (expected low or high)");
}

void TaskConfig::validate() const {
  if (n_samples == 0) {
    throw UsageError("task config: n_samples must be positive");
  }
  if (m_min == 0 || m_min > m_max) {
    throw UsageError("task config: entity range [" + std::to_string(m_min) + ", " + std::to_string(m_max) +
                     "] is empty");
  }
  if (desc_min == 0 || desc_min > desc_max) {
    throw UsageError("task config: description length range is empty");
  }
  if (max_calls == 0) {
    throw UsageError("task config: max_calls must be positive");
  }
  if (max_calls > m_min) {
    throw UsageError("task config: targets may reference " + std::to_string(max_calls) +
                     " entities but samples can have as few as " + std::to_string(m_min));
  }
  if (samples_per_group == 0) {
    throw UsageError("task config: samples_per_group must be positive");
  }
}

std::map<std::string, std::string> TaskConfig::to_map() const {
  return {
      {"task", std::string(to_string(task))},
      {"n_samples", std::to_string(n_samples)},
      {"m_min", std::to_string(m_min)},
      {"m_max", std::to_string(m_max)},
      {"desc_min", std::to_string(desc_min)},
      {"desc_max", std::to_string(desc_max)},
      {"name_similarity", std::string(to_string(similarity))},
      {"max_calls", std::to_string(max_calls)},
      {"samples_per_group", std::to_string(samples_per_group)},
      {"seed", std::to_string(seed)},
  };
}

TaskConfig TaskConfig::from_map(const std::map<std::string, std::string>& kv) {
  TaskConfig c;
  auto size_of = [&kv](const char* key, auto& field) {
    if (auto it = kv.find(key); it != kv.end()) {
      try {
        field = static_cast<std::remove_reference_t<decltype(field)>>(std::stoull(it->second));
      } catch (const std::exception&) {
        throw DataError(std::string("config key '") + key + "' is not an unsigned integer: " + it->second);
      }
    }
  };
  if (auto it = kv.find("task"); it != kv.end()) {
    c.task = parse_task_kind(it->second);
  }
  size_of("n_samples", c.n_samples);
  size_of("m_min", c.m_min);
  size_of("m_max", c.m_max);
  size_of("desc_min", c.desc_min);
  size_of("desc_max", c.desc_max);
  if (auto it = kv.find("name_similarity"); it != kv.end()) {
    c.similarity = parse_name_similarity(it->second);
  }
  size_of("max_calls", c.max_calls);
  size_of("samples_per_group", c.samples_per_group);
  size_of("seed", c.seed);
  return c;
}

namespace {

using Words = std::vector<std::string>;

void append_words(Words& out, std::string_view text) {
  for (auto& t : tokenize(text)) {
    out.push_back(std::move(t));
  }
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

std::string group_id(char prefix, std::size_t g) {
  std::string digits = std::to_string(g);
  return std::string(1, prefix) + std::string(digits.size() < 4 ? 4 - digits.size() : 0, '0') + digits;
}

/// How many entity references a target uses: P(1)=.75, P(2)=.2, P(3)=.05
/// for funcall, clamped to the allowed maximum.
std::size_t draw_call_count(Rng& rng, std::size_t max_calls, std::array<double, 2> cut) {
  const double u = rng.uniform();
  const std::size_t k = u < cut[0] ? 1 : (u < cut[1] ? 2 : 3);
  return std::min(k, max_calls);
}

std::size_t draw_group_size(Rng& rng, std::size_t mean) {
  return static_cast<std::size_t>(rng.range(1, static_cast<std::int64_t>(2 * mean - 1)));
}

// ---------------------------------------------------------------- funcall

struct Verb {
  std::vector<std::string> aliases;   // used in function names
  std::vector<std::string> synonyms;  // used in docstrings
  std::string code;                   // description body, {o} object, {a} attribute
};

const std::vector<Verb>& verbs() {
  static const std::vector<Verb> v = {
      {{"get", "fetch", "read", "load"}, {"retrieve", "obtain", "return"}, "return {o} . {a}"},
      {{"set", "put", "write", "assign"}, {"assign", "store", "place"}, "{o} . {a} = value"},
      {{"delete", "remove", "drop", "clear"}, {"erase", "discard", "destroy"}, "del {o} . {a}"},
      {{"update", "patch", "modify", "edit"}, {"change", "refresh", "revise"}, "{o} . {a} . update ( value )"},
      {{"check", "validate", "verify", "is"}, {"confirm", "inspect", "test"}, "assert {o} . {a} is not None"},
      {{"count", "num", "total", "size"}, {"tally", "measure", "enumerate"}, "return len ( {o} . {a} )"},
      {{"create", "make", "new", "build"}, {"construct", "produce", "generate"}, "{o} . {a} = new ( )"},
      {{"print", "show", "dump", "log"}, {"display", "emit", "output"}, "print ( {o} . {a} )"},
  };
  return v;
}

const std::vector<std::string>& nouns() {
  static const std::vector<std::string> v = {
      "user",    "order",   "item",    "file",     "config",  "account", "session", "token",
      "record",  "report",  "message", "queue",    "cache",   "node",    "page",    "image",
      "device",  "sensor",  "invoice", "payment",  "customer", "product", "ticket", "event",
      "task",    "job",     "table",   "document", "schema",  "buffer",  "stream",  "socket",
      "request", "response", "profile", "group",   "role",    "license", "package", "vendor"};
  return v;
}

struct Attr {
  std::string one;
  std::string many;
};

const std::vector<Attr>& attrs() {
  static const std::vector<Attr> v = {
      {"name", "names"},   {"id", "ids"},         {"tag", "tags"},       {"date", "dates"},
      {"price", "prices"}, {"mode", "modes"},   {"key", "keys"},       {"label", "labels"},
      {"path", "paths"},   {"title", "titles"},   {"score", "scores"},   {"owner", "owners"},
      {"email", "emails"}, {"url", "urls"},       {"note", "notes"},     {"color", "colors"},
      {"level", "levels"}, {"type", "types"},     {"hash", "hashes"},    {"rank", "ranks"},
      {"field", "fields"}, {"header", "headers"}, {"weight", "weights"}, {"limit", "limits"}};
  return v;
}

const std::vector<std::string>& name_prefixes() {
  static const std::vector<std::string> v = {"", "do", "my", "api", "util", "core", "x", "impl"};
  return v;
}

const std::vector<std::string>& fillers() {
  static const std::vector<std::string> v = {
      "log . debug ( msg )", "self . check ( )",     "if not ready : raise error", "tmp = none",
      "lock . acquire ( )",  "lock . release ( )",   "cache_hits += 1",             "retry = 3",
      "assert ok",           "pass",                 "timer . start ( )",           "counter += 1",
      "flag = true",         "ctx = self . context", "result = none",               "yield",
      "db . commit ( )",     "trace ( locals ( ) )", "if debug : dump ( state )",   "sleep ( 0 )"};
  return v;
}

struct Function {
  std::size_t verb;
  std::size_t noun;
  std::size_t attr;
  bool plural;
  std::string name;
  std::string description;
};

std::string function_description(const Function& f, std::size_t target_len, Rng& rng) {
  const auto& verb = verbs()[f.verb];
  const auto& attr = attrs()[f.attr].one;
  Words body;
  if (f.plural) {
    append_words(body, "for item in " + nouns()[f.noun] + " . all ( ) :");
    append_words(body, replace_all(replace_all(verb.code, "{o}", "item"), "{a}", attr));
  } else {
    append_words(body, replace_all(replace_all(verb.code, "{o}", nouns()[f.noun]), "{a}", attr));
  }
  Words before;
  Words after;
  while (body.size() + before.size() + after.size() < target_len) {
    Words& side = rng.bernoulli(0.5) ? before : after;
    append_words(side, rng.pick(fillers()));
  }
  Words out = std::move(before);
  out.insert(out.end(), body.begin(), body.end());
  out.insert(out.end(), after.begin(), after.end());
  // Keep the semantic body; trim filler from the tail, then the head.
  while (out.size() > target_len && !after.empty() && out.size() > body.size()) {
    out.pop_back();
    after.pop_back();
  }
  if (out.size() > target_len) {
    const std::size_t excess = std::min(out.size() - target_len, out.size() - body.size());
    out.erase(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(excess));
  }
  return join_tokens(out);
}

std::size_t draw_desc_len(Rng& rng, const TaskConfig& cfg) {
  const double raw = std::round(rng.normal(14.0, 5.0));
  const auto lo = static_cast<double>(cfg.desc_min);
  const auto hi = static_cast<double>(cfg.desc_max);
  return static_cast<std::size_t>(std::clamp(raw, lo, hi));
}

std::vector<Function> make_project(const TaskConfig& cfg, std::size_t m, Rng& rng) {
  const bool high = cfg.similarity == NameSimilarity::high;
  const std::size_t n_nouns = high ? 4 : 10;
  const std::size_t n_attrs = high ? 4 : 10;

  std::vector<std::size_t> noun_pool(nouns().size());
  std::iota(noun_pool.begin(), noun_pool.end(), 0);
  rng.shuffle(noun_pool);
  noun_pool.resize(n_nouns);
  std::vector<std::size_t> attr_pool(attrs().size());
  std::iota(attr_pool.begin(), attr_pool.end(), 0);
  rng.shuffle(attr_pool);
  attr_pool.resize(n_attrs);

  const std::string& prefix = rng.pick(name_prefixes());
  std::vector<std::string> alias(verbs().size());
  for (std::size_t v = 0; v < verbs().size(); ++v) {
    alias[v] = rng.pick(verbs()[v].aliases);
  }

  // Candidate (verb, noun, attr) triples; twins share a triple and differ in plurality.
  std::vector<std::array<std::size_t, 3>> triples;
  for (std::size_t v = 0; v < verbs().size(); ++v) {
    for (auto n : noun_pool) {
      for (auto a : attr_pool) {
        triples.push_back({v, n, a});
      }
    }
  }
  rng.shuffle(triples);

  std::vector<Function> fns;
  std::size_t next = 0;
  while (fns.size() < m) {
    if (next >= triples.size()) {
      throw UsageError("task config: cannot build " + std::to_string(m) + " distinct functions per project");
    }
    const auto [v, n, a] = triples[next++];
    const bool plural = rng.bernoulli(0.5);
    fns.push_back({v, n, a, plural, {}, {}});
    if (high && fns.size() < m) {
      fns.push_back({v, n, a, !plural, {}, {}});
    }
  }
  for (auto& f : fns) {
    f.name = (prefix.empty() ? "" : prefix + "_") + alias[f.verb] + "_" + nouns()[f.noun] + "_" +
             (f.plural ? attrs()[f.attr].many : attrs()[f.attr].one);
    f.description = function_description(f, draw_desc_len(rng, cfg), rng);
  }
  return fns;
}

std::string describe_call(const Function& f, Rng& rng) {
  return rng.pick(verbs()[f.verb].synonyms) + " the " + nouns()[f.noun] + " " +
         (f.plural ? attrs()[f.attr].many : attrs()[f.attr].one);
}

Sample funcall_sample(const TaskConfig& cfg, const std::vector<Function>& project, std::string id, Rng& rng) {
  const std::size_t m = project.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);  // entity j of the sample is project function order[j]

  const std::size_t k = draw_call_count(rng, std::min(cfg.max_calls, m), {0.75, 0.95});
  std::vector<std::size_t> slots(m);
  std::iota(slots.begin(), slots.end(), 0);
  rng.shuffle(slots);
  slots.resize(k);  // entity indices called, in call order

  std::string input;
  for (std::size_t c = 0; c < k; ++c) {
    if (c > 0) {
      input += " , then ";
    }
    input += describe_call(project[order[slots[c]]], rng);
  }
  input += " .";

  const std::string arg = nouns()[project[order[slots[0]]].noun];
  std::string target;
  for (std::size_t c = 0; c < k; ++c) {
    const std::string in = c == 0 ? arg : "v" + std::to_string(c);
    const std::string call = entity_marker(slots[c]) + " ( " + in + " )";
    if (c + 1 == k) {
      target += "return " + call;
    } else {
      target += "v" + std::to_string(c + 1) + " = " + call + " ; ";
    }
  }

  Sample s;
  s.id = std::move(id);
  s.input = std::move(input);
  s.target = std::move(target);
  for (auto idx : order) {
    s.entities.push_back({project[idx].name, project[idx].description});
  }
  return s;
}

// -------------------------------------------------------------- colselect

struct Column {
  std::string name;
  std::vector<std::string> paraphrases;
  std::vector<std::string> values;
};

const std::vector<Column>& columns() {
  static const std::vector<Column> v = {
      {"name", {"name", "full name"}, {"alice", "bruno", "chen", "dara", "elena", "farid", "gita", "hugo", "ines", "jonas", "kemal", "lena"}},
      {"country", {"country", "nation", "home country"}, {"france", "japan", "brazil", "kenya", "canada", "peru", "norway", "india", "egypt", "chile"}},
      {"city", {"city", "town", "home city"}, {"paris", "lima", "oslo", "cairo", "tokyo", "austin", "lyon", "porto", "delhi", "quito"}},
      {"age", {"age", "years of age"}, {"19", "23", "27", "31", "35", "42", "48", "56", "61", "67"}},
      {"year", {"year", "founding year", "year founded"}, {"1961", "1974", "1983", "1990", "1998", "2004", "2011", "2017", "2020"}},
      {"capacity", {"capacity", "number of seats", "seat count"}, {"1200", "2500", "4000", "8000", "15000", "30000", "52000"}},
      {"salary", {"salary", "pay", "wage"}, {"3100", "4200", "5600", "7000", "8800", "9900", "12500"}},
      {"rank", {"rank", "ranking", "position"}, {"1", "2", "3", "4", "5", "7", "9", "12", "15", "20"}},
      {"genre", {"genre", "style", "kind of music"}, {"jazz", "rock", "folk", "pop", "blues", "opera", "metal", "reggae"}},
      {"color", {"color", "colour", "paint"}, {"red", "blue", "green", "amber", "black", "white", "violet"}},
      {"status", {"status", "state", "current state"}, {"active", "closed", "pending", "paused", "retired", "open"}},
      {"budget", {"budget", "funding", "money available"}, {"50000", "120000", "300000", "750000", "900000"}},
      {"language", {"language", "spoken language", "tongue"}, {"english", "french", "hindi", "swahili", "spanish", "korean"}},
      {"rating", {"rating", "score", "stars"}, {"6", "8", "10", "11", "13", "14", "16", "18"}},
      {"height", {"height", "how tall", "stature"}, {"150", "162", "170", "178", "185", "193", "201"}},
      {"email", {"email", "mail address", "contact"}, {"info", "admin", "sales", "office", "desk", "press"}},
  };
  return v;
}

const std::vector<std::string>& tables() {
  static const std::vector<std::string> v = {
      "singer",  "concert", "stadium", "student", "course",   "teacher", "employee", "department",
      "airport", "flight",  "hotel",   "museum",  "player",   "team",    "match",    "book",
      "author",  "movie",   "actor",   "album",   "club",     "hospital", "doctor",  "school"};
  return v;
}

struct SchemaColumn {
  std::size_t table;
  std::size_t column;
  std::vector<std::string> values;
  std::string name;
  std::string description;
};

struct Schema {
  std::vector<std::vector<std::size_t>> by_table;  // indices into cols
  std::vector<SchemaColumn> cols;
};

Schema make_schema(const TaskConfig& cfg, std::size_t m, Rng& rng) {
  const bool high = cfg.similarity == NameSimilarity::high;
  const std::size_t n_tables = std::min(tables().size(), std::max<std::size_t>(1, (m + 2) / 4));
  std::vector<std::size_t> table_pool(tables().size());
  std::iota(table_pool.begin(), table_pool.end(), 0);
  rng.shuffle(table_pool);
  table_pool.resize(n_tables);

  std::vector<std::size_t> col_pool(columns().size());
  std::iota(col_pool.begin(), col_pool.end(), 0);
  rng.shuffle(col_pool);
  // High similarity: every table draws from a small shared column set.
  const std::size_t per_table_max = (m + n_tables - 1) / n_tables;
  if (high) {
    col_pool.resize(std::min(columns().size(), std::max<std::size_t>(per_table_max + 2, 6)));
  }
  if (per_table_max > col_pool.size()) {
    throw UsageError("task config: " + std::to_string(m) + " columns do not fit the schema pools");
  }

  Schema schema;
  schema.by_table.resize(n_tables);
  for (std::size_t t = 0; t < n_tables; ++t) {
    const std::size_t count = m / n_tables + (t < m % n_tables ? 1 : 0);
    std::vector<std::size_t> cols = col_pool;
    rng.shuffle(cols);
    cols.resize(count);
    for (auto c : cols) {
      SchemaColumn sc;
      sc.table = table_pool[t];
      sc.column = c;
      const auto& col = columns()[c];
      // "table T column C values v1 , v2 ..." has 4 + 2n - 1 tokens.
      const std::size_t target_len = draw_desc_len(rng, cfg);
      std::size_t n_values = target_len > 5 ? (target_len - 3) / 2 : 1;
      n_values = std::clamp<std::size_t>(n_values, 1, std::min<std::size_t>(col.values.size(), 4));
      std::vector<std::string> vals = col.values;
      rng.shuffle(vals);
      vals.resize(n_values);
      sc.values = vals;
      sc.name = tables()[sc.table] + "." + col.name;
      std::string desc = "table " + tables()[sc.table] + " column " + col.name + " values";
      for (std::size_t i = 0; i < vals.size(); ++i) {
        desc += (i == 0 ? " " : " , ") + vals[i];
      }
      const auto toks = tokenize(desc);
      if (toks.size() > cfg.desc_max) {
        const std::vector<std::string> cut(toks.begin(), toks.begin() + static_cast<std::ptrdiff_t>(cfg.desc_max));
        desc = join_tokens(cut);
      }
      sc.description = desc;
      schema.by_table[t].push_back(schema.cols.size());
      schema.cols.push_back(std::move(sc));
    }
  }
  return schema;
}

Sample colselect_sample(const TaskConfig& cfg, const Schema& schema, std::string id, Rng& rng) {
  const std::size_t m = schema.cols.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::size_t> slot_of(m);
  for (std::size_t j = 0; j < m; ++j) {
    slot_of[order[j]] = j;
  }

  const auto& members = schema.by_table[static_cast<std::size_t>(rng.below(schema.by_table.size()))];
  const std::size_t k = draw_call_count(rng, std::min(cfg.max_calls, members.size()), {0.45, 0.8});
  std::vector<std::size_t> picked = members;
  rng.shuffle(picked);
  picked.resize(k);

  const auto& first = schema.cols[picked[0]];
  const std::string& table = tables()[first.table];
  auto para = [&rng](const SchemaColumn& c) { return rng.pick(columns()[c.column].paraphrases); };

  std::string input;
  std::string target;
  if (k == 1) {
    input = "show the " + para(first) + " of each " + table;
    target = "select " + entity_marker(slot_of[picked[0]]);
  } else {
    const auto& where = schema.cols[picked[1]];
    const std::string& value = rng.pick(where.values);
    if (k == 2) {
      input = "show the " + para(first) + " of " + table + " whose " + para(where) + " is " + value;
      target = "select " + entity_marker(slot_of[picked[0]]);
    } else {
      const auto& second = schema.cols[picked[2]];
      input = "show the " + para(first) + " and " + para(second) + " of " + table + " whose " + para(where) +
              " is " + value;
      target = "select " + entity_marker(slot_of[picked[0]]) + " , " + entity_marker(slot_of[picked[2]]);
    }
    target += " where " + entity_marker(slot_of[picked[1]]) + " = " + value;
  }

  Sample s;
  s.id = std::move(id);
  s.input = std::move(input);
  s.target = std::move(target);
  for (auto idx : order) {
    s.entities.push_back({schema.cols[idx].name, schema.cols[idx].description});
  }
  return s;
}

std::size_t draw_entity_count(const TaskConfig& cfg, Rng& rng) {
  return static_cast<std::size_t>(rng.range(static_cast<std::int64_t>(cfg.m_min), static_cast<std::int64_t>(cfg.m_max)));
}

}  // namespace

Dataset gen_funcall(const TaskConfig& config) {
  config.validate();
  Rng rng(config.seed);
  Dataset data;
  for (std::size_t g = 0; data.size() < config.n_samples; ++g) {
    Rng group_rng = rng.fork(g);
    const auto project = make_project(config, draw_entity_count(config, group_rng), group_rng);
    const std::size_t n = std::min(draw_group_size(group_rng, config.samples_per_group), config.n_samples - data.size());
    for (std::size_t i = 0; i < n; ++i) {
      data.push_back(funcall_sample(config, project, group_id('p', g) + "/" + std::to_string(i), group_rng));
    }
  }
  return data;
}

Dataset gen_colselect(const TaskConfig& config) {
  config.validate();
  Rng rng(config.seed);
  Dataset data;
  for (std::size_t g = 0; data.size() < config.n_samples; ++g) {
    Rng group_rng = rng.fork(g);
    const auto schema = make_schema(config, draw_entity_count(config, group_rng), group_rng);
    const std::size_t n = std::min(draw_group_size(group_rng, config.samples_per_group), config.n_samples - data.size());
    for (std::size_t i = 0; i < n; ++i) {
      data.push_back(colselect_sample(config, schema, group_id('d', g) + "/" + std::to_string(i), group_rng));
    }
  }
  return data;
}

std::vector<std::string> colselect_paraphrases(std::string_view column) {
  for (const auto& c : columns()) {
    if (c.name == column) {
      return c.paraphrases;
    }
  }
  return {};
}

Dataset generate(const TaskConfig& config) {
  return config.task == TaskKind::funcall ? gen_funcall(config) : gen_colselect(config);
}

DataSplit split_dataset(const Dataset& data, SplitRatios ratios, std::uint64_t seed) {
  if (ratios.train + ratios.dev + ratios.test != 100) {
    throw UsageError("split ratios must sum to 100");
  }
  std::vector<std::string> group_names;
  std::unordered_map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto [it, fresh] = members.try_emplace(data[i].group());
    if (fresh) {
      group_names.push_back(it->first);
    }
    it->second.push_back(i);
  }
  Rng rng(seed);
  rng.shuffle(group_names);
  std::stable_sort(group_names.begin(), group_names.end(), [&members](const auto& a, const auto& b) {
    return members[a].size() > members[b].size();
  });

  const double n = static_cast<double>(data.size());
  std::array<long, 3> quota{static_cast<long>(std::lround(n * ratios.train / 100.0)),
                            static_cast<long>(std::lround(n * ratios.dev / 100.0)), 0};
  quota[2] = static_cast<long>(data.size()) - quota[0] - quota[1];

  std::vector<int> assign(data.size(), 0);
  for (const auto& g : group_names) {
    const auto size = static_cast<long>(members[g].size());
    int best = -1;
    for (int s = 0; s < 3; ++s) {
      if (quota[s] >= size && (best < 0 || quota[s] > quota[best])) {
        best = s;
      }
    }
    if (best < 0) {
      best = static_cast<int>(std::max_element(quota.begin(), quota.end()) - quota.begin());
    }
    quota[best] -= size;
    for (auto i : members[g]) {
      assign[i] = best;
    }
  }
  DataSplit out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    (assign[i] == 0 ? out.train : assign[i] == 1 ? out.dev : out.test).push_back(data[i]);
  }
  return out;
}

}  // namespace entdec
