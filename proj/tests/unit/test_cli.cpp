#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "entdec/bench.hpp"
#include "entdec/checkpoint.hpp"
#include "entdec/errors.hpp"
#include "entdec/experiment.hpp"
#include "entdec/kvconfig.hpp"

using namespace entdec;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("entdec_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ENTDEC_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ModelConfig tiny(std::size_t vocab) {
  ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_enc_layers = 1;
  c.n_dec_layers = 1;
  c.n_retriever_layers = 1;
  c.d_ff = 32;
  c.vocab_size = vocab;
  return c;
}

}  // namespace

TEST(Fitter, SelfTestAndSyntheticSlopes) {
  EXPECT_TRUE(fitter_self_test(0.05));
  const std::vector<double> n{8, 16, 32, 64, 128};
  std::vector<double> quad;
  std::vector<double> lin;
  for (double v : n) {
    quad.push_back(3e-6 * v * v);
    lin.push_back(2e-4 * v);
  }
  EXPECT_NEAR(fit_loglog(n, quad).slope, 2.0, 0.05);
  EXPECT_NEAR(fit_loglog(n, lin).slope, 1.0, 0.05);
  EXPECT_THROW(fit_loglog(std::vector<double>{4, 4}, std::vector<double>{1, 2}), NumericError);
}

TEST(Fitter, UpperHalfAndInversions) {
  std::vector<BenchPoint> pts;
  for (std::size_t n : {8, 16, 32, 64, 128}) {
    // Flat for small n, quadratic above.
    pts.push_back({"append", n, 64, 32, 32, n <= 16 ? 1.0 : static_cast<double>(n * n) / 1024.0, 5, 1});
  }
  EXPECT_NEAR(upper_half_slope(pts, "append"), 2.0, 1e-9);
  EXPECT_EQ(count_inversions(pts, "append"), 0u);
  pts[1].seconds = 0.5;
  EXPECT_EQ(count_inversions(pts, "append"), 1u);
}

TEST(Timing, MedianIsPositiveAndRepsGrow) {
  std::size_t reps = 0;
  volatile double sink = 0.0;
  const double t = time_median([&] { sink = sink + 1.0; }, 2, 5, reps);
  EXPECT_GT(t, 0.0);
  EXPECT_GT(reps, 1u);
  EXPECT_GT(timer_resolution(), 0.0);
}

TEST(RunConfig, MapRoundTripAndUnknownKey) {
  RunConfig r;
  r.seed = 9;
  r.k = 3;
  r.model.variant = RetrieverVariant::prepend_input;
  r.baseline = BaselineKind::topk;
  r.task.task = TaskKind::colselect;
  const RunConfig back = RunConfig::from_map(r.to_map());
  EXPECT_EQ(back.to_map(), r.to_map());
  KeyValues bad = r.to_map();
  bad["no_such_key"] = "1";
  EXPECT_THROW(RunConfig::from_map(bad), UsageError);
  EXPECT_EQ(parse_key_values(format_key_values(r.to_map())), r.to_map());
}

TEST(Checkpoint, RoundTripBytesAndLossAndCorruption) {
  const RunConfig run;
  TaskConfig tc;
  tc.n_samples = 40;
  const TaskData data = prepare_task(tc, 1);
  const EntityModel<float> model(tiny(data.vocab.size()), 4);
  const fs::path dir = temp_dir("ckpt");
  save_checkpoint(dir / "a", model, data.vocab, {{"seed", "1"}});
  const Checkpoint ck = load_checkpoint(dir / "a");
  save_checkpoint(dir / "b", ck.model, ck.vocab, ck.meta);
  EXPECT_EQ(slurp(dir / "a" / "manifest.txt"), slurp(dir / "b" / "manifest.txt"));
  EXPECT_EQ(slurp(dir / "a" / "params.bin"), slurp(dir / "b" / "params.bin"));
  const auto dev = encode_dataset(data.split.dev, data.vocab, dynamic_encode_options(model.config()));
  EXPECT_EQ(dataset_loss(model, dev), dataset_loss(ck.model, dev));
  EXPECT_EQ(ck.meta.at("seed"), "1");

  // Corrupted manifest.
  fs::copy(dir / "a", dir / "c", fs::copy_options::recursive);
  {
    std::string m = slurp(dir / "c" / "manifest.txt");
    m.replace(m.find("param "), 6, "parm ");
    std::ofstream(dir / "c" / "manifest.txt", std::ios::binary) << m;
  }
  EXPECT_THROW(load_checkpoint(dir / "c"), DataError);
  // Truncated blob.
  fs::copy(dir / "a", dir / "d", fs::copy_options::recursive);
  fs::resize_file(dir / "d" / "params.bin", fs::file_size(dir / "d" / "params.bin") / 2);
  EXPECT_THROW(load_checkpoint(dir / "d"), DataError);
  // Vocabulary mismatch at eval time.
  Vocabulary other = data.vocab;
  other.add("extra_token");
  EXPECT_THROW(require_same_vocab(ck.vocab, other), Error);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("gen-data --no-such-flag 1"), 2);
  EXPECT_EQ(run_cli("gen-data --task nonsense --out " + temp_dir("cli_bad").string()), 1);
  EXPECT_EQ(run_cli("eval --checkpoint " + temp_dir("cli_empty").string()), 1);
  EXPECT_EQ(run_cli("gradcheck"), 0);
}

TEST(Cli, GenDataIsReproducible) {
  const fs::path a = temp_dir("gen_a");
  const fs::path b = temp_dir("gen_b");
  ASSERT_EQ(run_cli("gen-data --task colselect --n_samples 60 --seed 3 --out " + a.string()), 0);
  ASSERT_EQ(run_cli("gen-data --task colselect --n_samples 60 --seed 3 --out " + b.string()), 0);
  for (const char* f : {"train.jsonl", "dev.jsonl", "test.jsonl"}) {
    EXPECT_FALSE(slurp(a / f).empty()) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  auto ka = load_key_values(a / "run_config.txt");
  auto kb = load_key_values(b / "run_config.txt");
  EXPECT_EQ(ka.at("seed"), "3");
  ka.erase("out");
  kb.erase("out");
  EXPECT_EQ(ka, kb);
}

TEST(Cli, TrainThenEvalOverfitsOneSample) {
  const fs::path out = temp_dir("overfit");
  ASSERT_EQ(run_cli("train --task funcall --n_samples 1 --m_min 4 --m_max 4 --max_steps 300 --eval_every 100 "
                    "--dropout 0 --out " +
                    out.string()),
            0);
  EXPECT_TRUE(fs::exists(out / "train_log.csv"));
  const std::string log = slurp(out / "train_log.csv");
  EXPECT_NE(log.find("step,loss,lr,dev_acc,dev_em"), std::string::npos);
  EXPECT_NE(log.find("# seed="), std::string::npos);
  ASSERT_EQ(run_cli("eval --checkpoint " + (out / "model").string() + " --split train --out " + out.string()), 0);
  std::ifstream in(out / "summary.csv");
  std::string line;
  double em = -1.0;
  while (std::getline(in, line)) {
    if (line.rfind("dynamic_vocab,em,", 0) == 0) {
      em = std::stod(line.substr(std::string("dynamic_vocab,em,").size()));
    }
  }
  EXPECT_EQ(em, 1.0);
  ASSERT_EQ(run_cli("gen-data --task funcall --n_samples 1 --m_min 4 --m_max 4 --out " + (out / "data").string()), 0);
  const fs::path samples = out / "data" / "train.jsonl";
  ASSERT_EQ(run_cli("decode --checkpoint " + (out / "model").string() + " --input " + samples.string() + " --out " +
                    (out / "dec").string()),
            0);
  EXPECT_NE(slurp(out / "dec" / "decode.jsonl").find("\"entities_used\""), std::string::npos);
}
