#include "entdec/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "entdec/decoding.hpp"
#include "entdec/errors.hpp"
#include "entdec/log.hpp"
#include "entdec/rng.hpp"

namespace entdec {

void BenchGrid::validate() const {
  if (n.size() < 2) {
    throw UsageError("bench grid needs at least two entity counts");
  }
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (n[i] == 0 || (i > 0 && n[i] <= n[i - 1])) {
      throw UsageError("bench grid entity counts must be positive and increasing");
    }
  }
  if (T == 0 || L == 0 || N == 0 || trials == 0) {
    throw UsageError("bench grid: T, L, N and trials must be positive");
  }
}

LineFit fit_loglog(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw UsageError("fit_loglog needs matching series of at least two points");
  }
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
      throw NumericError("fit_loglog needs positive values");
    }
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(y[i]) - my);
  }
  if (sxx == 0.0) {
    throw NumericError("fit_loglog needs two distinct x values");
  }
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

namespace {

std::vector<BenchPoint> of_method(std::span<const BenchPoint> points, const std::string& method) {
  std::vector<BenchPoint> out;
  for (const auto& p : points) {
    if (p.method == method) {
      out.push_back(p);
    }
  }
  std::sort(out.begin(), out.end(), [](const BenchPoint& a, const BenchPoint& b) { return a.n < b.n; });
  return out;
}

}  // namespace

double upper_half_slope(std::span<const BenchPoint> points, const std::string& method) {
  const auto pts = of_method(points, method);
  if (pts.size() < 2) {
    throw UsageError("no timings to fit for " + method);
  }
  const std::size_t from = std::min((pts.size() - 1) / 2, pts.size() - 2);
  std::vector<double> x;
  std::vector<double> y;
  for (std::size_t i = from; i < pts.size(); ++i) {
    x.push_back(static_cast<double>(pts[i].n));
    y.push_back(pts[i].seconds);
  }
  return fit_loglog(x, y).slope;
}

bool fitter_self_test(double tol) {
  std::vector<double> x{8, 16, 32, 64, 128};
  std::vector<double> lin;
  std::vector<double> quad;
  for (double v : x) {
    lin.push_back(3e-4 * v);
    quad.push_back(2e-6 * v * v);
  }
  return std::abs(fit_loglog(x, lin).slope - 1.0) <= tol && std::abs(fit_loglog(x, quad).slope - 2.0) <= tol;
}

std::size_t count_inversions(std::span<const BenchPoint> points, const std::string& method) {
  const auto pts = of_method(points, method);
  std::size_t inv = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    inv += pts[i].seconds < pts[i - 1].seconds ? 1 : 0;
  }
  return inv;
}

double timer_resolution() {
  using clock = std::chrono::steady_clock;
  double best = 1.0;
  for (int i = 0; i < 200; ++i) {
    const auto a = clock::now();
    auto b = clock::now();
    while (b == a) {
      b = clock::now();
    }
    best = std::min(best, std::chrono::duration<double>(b - a).count());
  }
  return best;
}

double time_median(const std::function<void()>& fn, std::size_t warmups, std::size_t trials, std::size_t& reps) {
  using clock = std::chrono::steady_clock;
  const double floor = 20.0 * timer_resolution();
  for (std::size_t i = 0; i < warmups; ++i) {
    fn();
  }
  reps = 1;
  std::vector<double> times;
  while (times.size() < trials) {
    const auto a = clock::now();
    for (std::size_t r = 0; r < reps; ++r) {
      fn();
    }
    const double dt = std::chrono::duration<double>(clock::now() - a).count();
    if (dt < floor) {
      reps *= 2;
      times.clear();  // restart with the coarser unit so trials stay comparable
      continue;
    }
    times.push_back(dt / static_cast<double>(reps));
  }
  std::sort(times.begin(), times.end());
  const std::size_t m = times.size() / 2;
  return times.size() % 2 == 1 ? times[m] : 0.5 * (times[m - 1] + times[m]);
}

namespace {

constexpr std::int64_t kFirstWord = 5;  // after the reserved ids

std::vector<std::int64_t> random_ids(Rng& rng, std::size_t count, std::size_t vocab) {
  std::vector<std::int64_t> out(count);
  for (auto& id : out) {
    id = kFirstWord + static_cast<std::int64_t>(rng.below(vocab - kFirstWord));
  }
  return out;
}

void forced_decode(const EntityModel<float>& model, const EncodedSample& sample,
                   std::span<const std::int64_t> forced) {
  ModelStepper<float> stepper(model, sample);
  auto state = stepper.start();
  for (std::size_t t = 0; t + 1 < forced.size(); ++t) {
    state = stepper.extend(*state, forced[t]);
  }
}

}  // namespace

BenchResult bench_scaling(const ModelConfig& model, const BenchGrid& grid) {
  grid.validate();
  ModelConfig cfg = model;
  if (cfg.vocab_size < 64) {
    cfg.vocab_size = 256;
  }
  cfg.dropout = 0.0;
  cfg.max_entity_len = std::max(cfg.max_entity_len, grid.L);
  const std::size_t per_entity = grid.L + 3;  // "|" name ":" description
  cfg.max_seq_len = std::max({cfg.max_seq_len, grid.T + grid.n.back() * per_entity, grid.N + 1});
  const EntityModel<float> net(cfg, grid.seed);

  BenchResult result;
  result.fitter_ok = fitter_self_test();
  if (!result.fitter_ok) {
    throw NumericError("slope fitter failed its self-test");
  }
  Rng rng(grid.seed);
  const auto x = random_ids(rng, grid.T, cfg.vocab_size);
  const auto forced = random_ids(rng, grid.N, cfg.vocab_size);
  const std::size_t max_n = grid.n.back();
  std::vector<std::vector<std::int64_t>> descs;
  std::vector<std::int64_t> names = random_ids(rng, max_n, cfg.vocab_size);
  for (std::size_t j = 0; j < max_n; ++j) {
    descs.push_back(random_ids(rng, grid.L, cfg.vocab_size));
  }
  const std::int64_t colon = kFirstWord;
  const std::int64_t bar = kFirstWord + 1;

  for (std::size_t n : grid.n) {
    EncodedSample dyn;
    dyn.input = x;
    dyn.descriptions.assign(descs.begin(), descs.begin() + static_cast<std::ptrdiff_t>(n));

    EncodedSample app;
    app.input = x;
    for (std::size_t j = 0; j < n; ++j) {
      app.input.push_back(bar);
      app.input.push_back(names[j]);
      app.input.push_back(colon);
      app.input.insert(app.input.end(), descs[j].begin(), descs[j].end());
    }

    for (const auto& [method, sample] : {std::pair<std::string, const EncodedSample*>{"dynamic_vocab", &dyn},
                                         std::pair<std::string, const EncodedSample*>{"append", &app}}) {
      BenchPoint p;
      p.method = method;
      p.n = n;
      p.T = grid.T;
      p.L = grid.L;
      p.N = grid.N;
      p.trials = grid.trials;
      const EncodedSample* s = sample;
      p.seconds = time_median([&] { forced_decode(net, *s, forced); }, grid.warmups, grid.trials, p.reps);
      log_info(method + " n=" + std::to_string(n) + " " + std::to_string(p.seconds) + " s");
      result.points.push_back(p);
    }
  }
  result.dynamic_slope = upper_half_slope(result.points, "dynamic_vocab");
  result.append_slope = upper_half_slope(result.points, "append");
  for (const char* m : {"dynamic_vocab", "append"}) {
    if (count_inversions(result.points, m) > 1) {
      result.flags.push_back(std::string(m) + ": timings decrease with n more than once");
      log_warn(result.flags.back());
    }
  }
  return result;
}

void write_bench_csv(const std::filesystem::path& path, const BenchResult& result,
                     const std::vector<std::pair<std::string, std::string>>& preamble) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write " + path.string());
  }
  out.precision(9);
  for (const auto& [k, v] : preamble) {
    out << "# " << k << '=' << v << '\n';
  }
  out << "# slope_dynamic_vocab=" << result.dynamic_slope << '\n';
  out << "# slope_append=" << result.append_slope << '\n';
  for (const auto& f : result.flags) {
    out << "# flag=" << f << '\n';
  }
  out << "method,n,T,L,N,seconds,trials,reps\n";
  for (const auto& p : result.points) {
    out << p.method << ',' << p.n << ',' << p.T << ',' << p.L << ',' << p.N << ',' << p.seconds << ',' << p.trials
        << ',' << p.reps << '\n';
  }
  if (!out) {
    throw DataError("write failed: " + path.string());
  }
}

}  // namespace entdec
