// entdec: data generation, training, evaluation, decoding, the scaling
// benchmark and the gradient check suite behind one binary.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "entdec/bench.hpp"
#include "entdec/checkpoint.hpp"
#include "entdec/errors.hpp"
#include "entdec/experiment.hpp"
#include "entdec/gradcheck_suite.hpp"
#include "entdec/log.hpp"
#include "entdec/report.hpp"

namespace fs = std::filesystem;
using namespace entdec;

namespace {

constexpr int kUsageExit = 2;
constexpr int kFailureExit = 1;

// Every run-config key doubles as a flag; values stay unset unless given.
struct ConfigFlags {
  std::optional<std::string> config_path;
  std::map<std::string, std::optional<std::string>> values;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "key=value config file")->check(CLI::ExistingFile);
    for (const auto& [key, def] : RunConfig{}.to_map()) {
      std::string names = "--" + key;
      if (key.find('_') != std::string::npos) {
        std::string dashed = key;
        std::replace(dashed.begin(), dashed.end(), '_', '-');
        names += ",--" + dashed;
      }
      app.add_option(names, values[key], "default " + (def.empty() ? std::string("\"\"") : def));
    }
  }

  // base, then the config file, then flags.
  RunConfig resolve(const KeyValues& base = {}) const {
    KeyValues kv = base;
    if (config_path) {
      for (auto& [k, v] : load_key_values(*config_path)) {
        kv[k] = v;
      }
    }
    for (const auto& [k, v] : values) {
      if (v) {
        kv[k] = *v;
      }
    }
    return RunConfig::from_map(kv);
  }
};

std::map<std::string, std::string> checkpoint_meta(const RunConfig& run, const std::string& kind) {
  auto meta = run.to_map();
  meta["kind"] = kind;
  return {meta.begin(), meta.end()};
}

// Run-config keys recorded in a checkpoint; bookkeeping entries dropped.
KeyValues run_keys(const std::map<std::string, std::string>& meta) {
  const auto known = RunConfig{}.to_map();
  KeyValues kv;
  for (const auto& [k, v] : meta) {
    if (known.count(k) != 0) {
      kv[k] = v;
    }
  }
  return kv;
}

void write_run_config(const fs::path& dir, const RunConfig& run) {
  fs::create_directories(dir);
  std::ofstream out(dir / "run_config.txt");
  out << format_key_values(run.to_map());
  if (!out) {
    throw DataError("cannot write " + (dir / "run_config.txt").string());
  }
}

Preamble report_preamble(const RunConfig& run, const std::string& split) {
  Preamble p = provenance(run);
  p.emplace_back("split", split);
  p.emplace_back("topk_similarity", "tfidf_cosine");
  return p;
}

int cmd_gen_data(const RunConfig& run) {
  const TaskData data = prepare_task(run.task, run.seed);
  const fs::path out = run.out_dir;
  fs::create_directories(out);
  save_jsonl(data.split.train, out / "train.jsonl");
  save_jsonl(data.split.dev, out / "dev.jsonl");
  save_jsonl(data.split.test, out / "test.jsonl");
  write_run_config(out, run);
  std::cout << "wrote " << data.split.train.size() << " train, " << data.split.dev.size() << " dev, "
            << data.split.test.size() << " test samples to " << out.string() << " (vocabulary " << data.vocab.size()
            << ")\n";
  return 0;
}

int cmd_train(const RunConfig& run) {
  if (run.baseline == BaselineKind::our_retrieval) {
    throw UsageError(
        "our_retrieval evaluates an oracle-trained append model; train with --baseline oracle, then run eval with "
        "--baseline our_retrieval --selector <dynamic checkpoint>");
  }
  const TaskData data = prepare_task(run.task, run.seed);
  const bool dynamic = run.baseline == BaselineKind::none;
  ModelConfig cfg = dynamic ? run.model : append_model_config(run, data.vocab);
  cfg.vocab_size = data.vocab.size();
  EntityModel<float> model(cfg, run.seed);
  const std::string kind = dynamic ? "dynamic" : "append";
  const fs::path out = run.out_dir;
  fs::create_directories(out);

  TrainHooks hooks;
  hooks.on_eval = [&](const EntityModel<float>& m, const TrainLogRow& row) {
    std::printf("step %zu loss %.4f lr %.2e", row.step, row.loss, row.lr);
    auto meta = checkpoint_meta(run, kind);
    meta["step"] = std::to_string(row.step);
    if (row.dev) {
      std::printf(" dev_acc %.4f dev_em %.4f", row.dev->acc, row.dev->em);
      meta["dev_acc"] = std::to_string(row.dev->acc);
      meta["dev_em"] = std::to_string(row.dev->em);
    }
    std::printf("\n");
    std::fflush(stdout);
    char name[32];
    std::snprintf(name, sizeof name, "step_%06zu", row.step);
    save_checkpoint(out / "checkpoints" / name, m, data.vocab, meta);
  };
  const TrainResult result =
      dynamic ? train_dynamic(model, data, run, hooks) : train_append(model, data, run, run.baseline, hooks);

  auto meta = checkpoint_meta(run, kind);
  meta["step"] = std::to_string(result.steps);
  save_checkpoint(out / "model", model, data.vocab, meta);
  Preamble pre = provenance(run);
  pre.emplace_back("kind", kind);
  pre.emplace_back("cpu_seconds", std::to_string(result.cpu_seconds));
  write_train_log((out / "train_log.csv").string(), result.log, pre);
  std::printf("trained %zu steps in %.1f CPU s; checkpoint %s\n", result.steps, result.cpu_seconds,
              (out / "model").string().c_str());
  return 0;
}

const Dataset& pick_split(const TaskData& data, const std::string& split) {
  if (split == "train") {
    return data.split.train;
  }
  if (split == "dev") {
    return data.split.dev;
  }
  if (split == "test") {
    return data.split.test;
  }
  throw UsageError("unknown split '" + split + "' (train, dev or test)");
}

int cmd_eval(const ConfigFlags& flags, const std::string& checkpoint, const std::string& selector,
             const std::string& split, std::size_t limit) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const RunConfig run = flags.resolve(run_keys(ck.meta));
  const TaskData data = prepare_task(run.task, run.seed);
  require_same_vocab(ck.vocab, data.vocab);
  const Dataset& samples = pick_split(data, split);
  const std::size_t n = limit == 0 ? samples.size() : std::min(limit, samples.size());
  const std::span<const Sample> view(samples.data(), n);
  const bool append_model = ck.meta.count("kind") != 0 && ck.meta.at("kind") == "append";

  std::vector<EvalRecord> records;
  if (!append_model) {
    if (run.baseline != BaselineKind::none) {
      throw UsageError("checkpoint holds a dynamic-vocabulary model; evaluate baselines with an append checkpoint");
    }
    records = evaluate_dynamic(ck.model, ck.vocab, view, run.decode, "dynamic_vocab");
  } else {
    if (run.baseline == BaselineKind::none) {
      throw UsageError("checkpoint holds an append model; pass --baseline");
    }
    std::vector<std::vector<std::size_t>> selections;
    if (run.baseline == BaselineKind::our_retrieval) {
      if (selector.empty()) {
        throw UsageError("our_retrieval needs --selector <dynamic checkpoint>");
      }
      const Checkpoint sel = load_checkpoint(selector);
      require_same_vocab(sel.vocab, data.vocab);
      for (auto& r : evaluate_dynamic(sel.model, sel.vocab, view, run.decode, "selector")) {
        selections.push_back(std::move(r.predicted));
      }
    }
    const auto inputs = baseline_inputs(view, run.baseline, run.k, selections, ck.model.config().max_seq_len);
    records = evaluate_append(ck.model, ck.vocab, view, inputs, run.decode, std::string(to_string(run.baseline)));
  }

  const fs::path out = run.out_dir;
  const Preamble pre = report_preamble(run, split);
  const auto summary = summarize(records);
  write_records_csv(out / "records.csv", records, pre);
  write_summary_csv(out / "summary.csv", summary, pre);
  write_buckets_csv(out / "buckets.csv", bucket_accuracy(records, 1000, 0.90, run.seed), pre);
  for (const auto& m : summary) {
    std::printf("%s n=%zu acc=%.4f em=%.4f chrf=%.4f truncated=%zu\n", m.method.c_str(), m.n, m.acc, m.em, m.chrf,
                m.truncated);
  }
  return 0;
}

int cmd_decode(const ConfigFlags& flags, const std::string& checkpoint, const std::string& input) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const RunConfig run = flags.resolve(run_keys(ck.meta));
  const Dataset samples = load_jsonl(input);
  const bool append_model = ck.meta.count("kind") != 0 && ck.meta.at("kind") == "append";
  const fs::path out = run.out_dir;
  fs::create_directories(out);
  std::ofstream jsonl(out / "decode.jsonl");
  if (!jsonl) {
    throw DataError("cannot write " + (out / "decode.jsonl").string());
  }
  for (const auto& s : samples) {
    DecodeResult r;
    if (append_model) {
      if (run.baseline == BaselineKind::none || run.baseline == BaselineKind::our_retrieval) {
        throw UsageError("decoding with an append model needs --baseline input_only, topk or oracle");
      }
      const BaselineInput b = build_baseline_input(s, run.baseline, run.k, {}, ck.model.config().max_seq_len);
      const EncodedSample e = encode_sample(b.sample, ck.vocab, append_encode_options(ck.model.config()));
      r = decode(ck.model, ck.vocab, b.sample, e, run.decode);
      r.entities_used = find_entity_mentions(r.output, s.entities);
    } else {
      const EncodedSample e = encode_sample(s, ck.vocab, dynamic_encode_options(ck.model.config()));
      r = decode(ck.model, ck.vocab, s, e, run.decode);
    }
    jsonl << decode_result_json(s.id, r, s.entities) << '\n';
  }
  write_run_config(out, run);
  std::printf("decoded %zu samples to %s\n", samples.size(), (out / "decode.jsonl").string().c_str());
  return 0;
}

int cmd_bench(const RunConfig& run, const BenchGrid& grid) {
  ModelConfig cfg = run.model;
  cfg.vocab_size = 256;
  const BenchResult result = bench_scaling(cfg, grid);
  Preamble pre = provenance(run);
  std::ostringstream ns;
  for (std::size_t i = 0; i < grid.n.size(); ++i) {
    ns << (i ? " " : "") << grid.n[i];
  }
  pre.emplace_back("grid_n", ns.str());
  pre.emplace_back("warmups", std::to_string(grid.warmups));
  write_bench_csv(fs::path(run.out_dir) / "bench.csv", result, pre);
  for (const auto& p : result.points) {
    std::printf("%-14s n=%-4zu %.6f s (reps %zu)\n", p.method.c_str(), p.n, p.seconds, p.reps);
  }
  std::printf("slope dynamic_vocab %.3f append %.3f\n", result.dynamic_slope, result.append_slope);
  return 0;
}

int cmd_gradcheck() {
  bool ok = true;
  for (const auto& c : run_gradcheck_suite()) {
    std::printf("%-28s %s max_rel %.3e\n", c.name.c_str(), c.report.passed ? "ok  " : "FAIL", c.report.max_rel_error);
    ok = ok && c.report.passed;
  }
  return ok ? 0 : kFailureExit;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entity-augmented sequence generation: data, training, evaluation and benchmarks"};
  app.require_subcommand(1);
  bool quiet = false;
  bool verbose = false;
  app.add_flag("-q,--quiet", quiet, "only errors");
  app.add_flag("-v,--verbose", verbose, "progress messages");

  ConfigFlags flags;
  auto* gen = app.add_subcommand("gen-data", "generate a task and write train/dev/test JSONL");
  auto* tr = app.add_subcommand("train", "train the dynamic-vocabulary model or a baseline generator");
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint and write report CSVs");
  auto* de = app.add_subcommand("decode", "decode samples from a JSONL file");
  auto* be = app.add_subcommand("bench", "time decoding against the number of entities");
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  for (auto* sub : {gen, tr, ev, de, be}) {
    flags.attach(*sub);
  }

  std::string checkpoint;
  std::string selector;
  std::string split = "test";
  std::size_t limit = 0;
  ev->add_option("--checkpoint", checkpoint, "checkpoint directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--selector", selector, "dynamic-vocabulary checkpoint choosing entities for our_retrieval")
      ->check(CLI::ExistingDirectory);
  ev->add_option("--split", split, "train, dev or test")->check(CLI::IsMember({"train", "dev", "test"}));
  ev->add_option("--limit", limit, "evaluate only the first N samples");

  std::string input;
  de->add_option("--checkpoint", checkpoint, "checkpoint directory")->required()->check(CLI::ExistingDirectory);
  de->add_option("--input", input, "samples in JSONL")->required()->check(CLI::ExistingFile);

  BenchGrid grid;
  be->add_option("--n-values", grid.n, "entity counts")->delimiter(',');
  be->add_option("--T", grid.T, "input length");
  be->add_option("--L", grid.L, "description length");
  be->add_option("--N", grid.N, "output length");
  be->add_option("--trials", grid.trials, "timed trials per point");
  be->add_option("--warmups", grid.warmups, "discarded runs per point");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageExit;
  }
  set_log_level(quiet ? LogLevel::quiet : verbose ? LogLevel::info : LogLevel::warn);

  try {
    if (*gc) {
      return cmd_gradcheck();
    }
    if (*ev) {
      return cmd_eval(flags, checkpoint, selector, split, limit);
    }
    if (*de) {
      return cmd_decode(flags, checkpoint, input);
    }
    const RunConfig run = flags.resolve();
    if (*gen) {
      return cmd_gen_data(run);
    }
    if (*tr) {
      return cmd_train(run);
    }
    grid.seed = run.seed;
    return cmd_bench(run, grid);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailureExit;
  }
}
