#include "entdec/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "entdec/errors.hpp"
#include "entdec/metrics.hpp"

namespace entdec {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::size_t to_size(const std::string& key, const std::string& value) {
  if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos) {
    throw UsageError("config key '" + key + "' expects an unsigned integer, got '" + value + "'");
  }
  return static_cast<std::size_t>(std::stoull(value));
}

double to_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) {
    throw UsageError("config key '" + key + "' expects a number, got '" + value + "'");
  }
  return v;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes") {
    return true;
  }
  if (value == "0" || value == "false" || value == "no") {
    return false;
  }
  throw UsageError("config key '" + key + "' expects true or false, got '" + value + "'");
}

}  // namespace

KeyValues RunConfig::to_map() const {
  KeyValues kv;
  for (auto& [k, v] : task.to_map()) {
    kv[k] = v;
  }
  for (auto& [k, v] : model.to_map()) {
    kv[k] = v;
  }
  kv.erase("vocab_size");  // derived from the data
  kv["batch_size"] = std::to_string(train.batch_size);
  kv["epochs"] = std::to_string(train.epochs);
  kv["max_steps"] = std::to_string(train.max_steps);
  kv["lr"] = fmt(train.lr);
  kv["warmup_steps"] = std::to_string(train.warmup_steps);
  kv["clip_norm"] = fmt(train.clip_norm);
  kv["eval_every"] = std::to_string(train.eval_every);
  kv["cpu_budget_seconds"] = fmt(train.cpu_budget_seconds);
  kv["seed"] = std::to_string(seed);
  kv["baseline"] = std::string(to_string(baseline));
  kv["k"] = std::to_string(k);
  kv["beam"] = std::to_string(decode.beam);
  kv["max_decode_len"] = std::to_string(decode.max_len);
  kv["separate_training"] = separate_training ? "true" : "false";
  kv["dev_eval_samples"] = std::to_string(dev_eval_samples);
  kv["out"] = out_dir;
  return kv;
}

bool RunConfig::set(const std::string& key, const std::string& value) {
  auto task_map = task.to_map();
  if (key != "seed" && task_map.count(key) != 0) {
    if (key != "task" && key != "name_similarity") {
      to_size(key, value);
    }
    task_map[key] = value;
    task = TaskConfig::from_map(task_map);
    return true;
  }
  auto model_map = model.to_map();
  if (key != "vocab_size" && model_map.count(key) != 0) {
    if (key == "dropout" || key == "init_std") {
      to_double(key, value);
    } else if (key != "variant") {
      to_size(key, value);
    }
    model_map[key] = value;
    model = ModelConfig::from_map(model_map);
    return true;
  }
  if (key == "batch_size") {
    train.batch_size = to_size(key, value);
  } else if (key == "epochs") {
    train.epochs = to_size(key, value);
  } else if (key == "max_steps") {
    train.max_steps = to_size(key, value);
  } else if (key == "lr") {
    train.lr = to_double(key, value);
  } else if (key == "warmup_steps") {
    train.warmup_steps = to_size(key, value);
  } else if (key == "clip_norm") {
    train.clip_norm = to_double(key, value);
  } else if (key == "eval_every") {
    train.eval_every = to_size(key, value);
  } else if (key == "cpu_budget_seconds") {
    train.cpu_budget_seconds = to_double(key, value);
  } else if (key == "seed") {
    seed = to_size(key, value);
  } else if (key == "baseline") {
    baseline = parse_baseline_kind(value);
  } else if (key == "k") {
    k = to_size(key, value);
  } else if (key == "beam") {
    decode.beam = to_size(key, value);
  } else if (key == "max_decode_len") {
    decode.max_len = to_size(key, value);
  } else if (key == "separate_training") {
    separate_training = to_bool(key, value);
  } else if (key == "dev_eval_samples") {
    dev_eval_samples = to_size(key, value);
  } else if (key == "out") {
    out_dir = value;
  } else {
    return false;
  }
  task.seed = seed;
  train.seed = seed;
  return true;
}

RunConfig RunConfig::from_map(const KeyValues& kv) {
  RunConfig run;
  for (const auto& [key, value] : kv) {
    if (!run.set(key, value)) {
      throw UsageError("unknown config key '" + key + "'");
    }
  }
  run.task.seed = run.seed;
  run.train.seed = run.seed;
  return run;
}

std::vector<std::pair<std::string, std::string>> provenance(const RunConfig& run) {
  auto kv = run.to_map();
  return {kv.begin(), kv.end()};
}

TaskData prepare_task(const TaskConfig& task, std::uint64_t split_seed) {
  TaskData d;
  d.all = generate(task);
  d.split = split_dataset(d.all, SplitRatios{}, split_seed);
  d.vocab = build_vocabulary(d.all);
  return d;
}

EncodeOptions dynamic_encode_options(const ModelConfig& model) {
  EncodeOptions o;
  o.max_input_len = model.max_seq_len;
  o.max_target_len = model.max_seq_len;
  o.max_entity_len = model.max_entity_len;
  return o;
}

EncodeOptions append_encode_options(const ModelConfig& model) {
  EncodeOptions o = dynamic_encode_options(model);
  o.include_entities = false;
  o.target_mode = TargetMode::names;
  return o;
}

namespace {

std::size_t capped(std::size_t n, std::size_t limit) { return limit == 0 ? n : std::min(n, limit); }

void score_record(EvalRecord& r, const Sample& s) {
  const auto gold = s.gold();
  r.gold_count = gold.size();
  if (!gold.empty()) {
    r.acc = retrieval_acc(r.predicted, gold);
  }
  const std::string reference = render_target_names(s);
  r.em = exact_match(r.output, reference);
  r.chrf = chrf(r.output, reference);
}

}  // namespace

std::vector<EvalRecord> evaluate_dynamic(const EntityModel<float>& model, const Vocabulary& vocab,
                                         std::span<const Sample> samples, const DecodeOptions& options,
                                         const std::string& method, std::size_t limit) {
  const EncodeOptions enc = dynamic_encode_options(model.config());
  const std::size_t n = capped(samples.size(), limit);
  std::vector<EvalRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = samples[i];
    const EncodedSample e = encode_sample(s, vocab, enc);
    const DecodeResult d = decode(model, vocab, s, e, options);
    EvalRecord r;
    r.sample_id = s.id;
    r.method = method;
    r.output = d.output;
    r.predicted = d.entities_used;
    r.score = d.score;
    r.truncated = e.input_truncated || e.descriptions_truncated > 0;
    score_record(r, s);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<BaselineInput> baseline_inputs(std::span<const Sample> samples, BaselineKind kind, std::size_t k,
                                           std::span<const std::vector<std::size_t>> selections,
                                           std::size_t max_input_tokens) {
  if (kind == BaselineKind::none) {
    throw UsageError("baseline_inputs needs a baseline kind");
  }
  if (kind == BaselineKind::our_retrieval && selections.size() != samples.size()) {
    throw UsageError("our_retrieval needs one entity selection per sample");
  }
  std::vector<BaselineInput> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::span<const std::size_t> sel;
    if (kind == BaselineKind::our_retrieval) {
      sel = selections[i];
    }
    out.push_back(build_baseline_input(samples[i], kind, k, sel, max_input_tokens));
  }
  return out;
}

std::vector<EvalRecord> evaluate_append(const EntityModel<float>& model, const Vocabulary& vocab,
                                        std::span<const Sample> originals, std::span<const BaselineInput> inputs,
                                        const DecodeOptions& options, const std::string& method,
                                        std::size_t limit) {
  if (originals.size() != inputs.size()) {
    throw UsageError("evaluate_append: originals and baseline inputs differ in length");
  }
  const EncodeOptions enc = append_encode_options(model.config());
  const std::size_t n = capped(originals.size(), limit);
  std::vector<EvalRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = originals[i];
    const EncodedSample e = encode_sample(inputs[i].sample, vocab, enc);
    const DecodeResult d = decode(model, vocab, inputs[i].sample, e, options);
    EvalRecord r;
    r.sample_id = s.id;
    r.method = method;
    r.output = d.output;
    r.predicted = find_entity_mentions(d.output, s.entities);
    r.score = d.score;
    r.truncated = inputs[i].truncated || e.input_truncated;
    score_record(r, s);
    out.push_back(std::move(r));
  }
  return out;
}

DevMetrics mean_metrics(std::span<const EvalRecord> records) {
  DevMetrics m;
  std::size_t n_acc = 0;
  for (const auto& r : records) {
    if (!std::isnan(r.acc)) {
      m.acc += r.acc;
      ++n_acc;
    }
    m.em += r.em;
  }
  if (n_acc > 0) {
    m.acc /= static_cast<double>(n_acc);
  }
  if (!records.empty()) {
    m.em /= static_cast<double>(records.size());
  }
  return m;
}

ModelConfig append_model_config(const RunConfig& run, const Vocabulary& vocab) {
  ModelConfig c = run.model;
  c.vocab_size = vocab.size();
  // Appended entities lengthen the input well past a bare question.
  c.max_seq_len = std::max<std::size_t>(c.max_seq_len, 512);
  return c;
}

namespace {

constexpr DecodeOptions kDevDecode{1, 128};

TrainResult run_phases(EntityModel<float>& model, std::span<const EncodedSample> phase1,
                       std::span<const EncodedSample> phase2, const TrainOptions& options, const TrainHooks& hooks) {
  const std::size_t total = planned_steps(options, phase2.size());
  TrainOptions first = options;
  first.epochs = 0;
  first.max_steps = std::max<std::size_t>(1, total / 2);
  first.cpu_budget_seconds = options.cpu_budget_seconds / 2.0;
  TrainOptions second = first;
  second.max_steps = std::max<std::size_t>(1, total - first.max_steps);
  second.seed = options.seed + 1;

  TrainHooks quiet;  // dev metrics are only meaningful once entity tokens exist
  quiet.on_eval = hooks.on_eval;
  const double cpu0 = process_cpu_seconds();
  TrainResult a = train(model, phase1, first, quiet);
  if (options.cpu_budget_seconds > 0.0) {
    second.cpu_budget_seconds = std::max(1.0, options.cpu_budget_seconds - (process_cpu_seconds() - cpu0));
  }
  TrainHooks shifted = hooks;
  if (hooks.on_eval) {
    shifted.on_eval = [&](const EntityModel<float>& m, const TrainLogRow& row) {
      TrainLogRow r = row;
      r.step += a.steps;
      hooks.on_eval(m, r);
    };
  }
  TrainResult b = train(model, phase2, second, shifted);
  for (auto& row : b.log) {
    row.step += a.steps;
    a.log.push_back(row);
  }
  a.steps += b.steps;
  a.cpu_seconds += b.cpu_seconds;
  a.final_loss = b.final_loss;
  return a;
}

}  // namespace

TrainResult train_dynamic(EntityModel<float>& model, const TaskData& data, const RunConfig& run,
                          const TrainHooks& hooks) {
  const auto train_set = encode_dataset(data.split.train, data.vocab, dynamic_encode_options(model.config()));
  TrainHooks h = hooks;
  if (!h.evaluate && run.dev_eval_samples > 0 && !data.split.dev.empty()) {
    h.evaluate = [&data, &run](const EntityModel<float>& m) {
      return mean_metrics(evaluate_dynamic(m, data.vocab, data.split.dev, kDevDecode, "dev", run.dev_eval_samples));
    };
  }
  if (!run.separate_training) {
    return train(model, train_set, run.train, h);
  }
  const auto names_set = encode_dataset(data.split.train, data.vocab, append_encode_options(model.config()));
  return run_phases(model, names_set, train_set, run.train, h);
}

TrainResult train_append(EntityModel<float>& model, const TaskData& data, const RunConfig& run, BaselineKind kind,
                         const TrainHooks& hooks) {
  if (kind == BaselineKind::none || kind == BaselineKind::our_retrieval) {
    throw UsageError("append training needs input_only, topk or oracle inputs");
  }
  const std::size_t max_tokens = model.config().max_seq_len;
  const auto inputs = baseline_inputs(data.split.train, kind, run.k, {}, max_tokens);
  Dataset rewritten;
  rewritten.reserve(inputs.size());
  for (const auto& b : inputs) {
    rewritten.push_back(b.sample);
  }
  const auto train_set = encode_dataset(rewritten, data.vocab, append_encode_options(model.config()));

  TrainHooks h = hooks;
  std::vector<BaselineInput> dev_inputs;
  if (!h.evaluate && run.dev_eval_samples > 0 && !data.split.dev.empty()) {
    const std::size_t n = std::min(run.dev_eval_samples, data.split.dev.size());
    const std::span<const Sample> dev(data.split.dev.data(), n);
    dev_inputs = baseline_inputs(dev, kind, run.k, {}, max_tokens);
    h.evaluate = [&data, &dev_inputs, dev](const EntityModel<float>& m) {
      return mean_metrics(evaluate_append(m, data.vocab, dev, dev_inputs, kDevDecode, "dev"));
    };
  }
  return train(model, train_set, run.train, h);
}

}  // namespace entdec
