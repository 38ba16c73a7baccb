#include "entdec/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "entdec/errors.hpp"
#include "entdec/log.hpp"

namespace entdec {

std::vector<MethodSummary> summarize(std::span<const EvalRecord> records) {
  std::vector<MethodSummary> rows;
  std::map<std::string, std::size_t> index;
  for (const auto& r : records) {
    auto [it, fresh] = index.emplace(r.method, rows.size());
    if (fresh) {
      rows.push_back(MethodSummary{r.method});
    }
    MethodSummary& m = rows[it->second];
    ++m.n;
    if (!std::isnan(r.acc)) {
      m.acc += r.acc;
      ++m.n_acc;
    }
    m.em += r.em;
    m.chrf += r.chrf;
    m.truncated += r.truncated ? 1 : 0;
  }
  for (auto& m : rows) {
    if (m.n_acc > 0) {
      m.acc /= static_cast<double>(m.n_acc);
    }
    m.em /= static_cast<double>(m.n);
    m.chrf /= static_cast<double>(m.n);
  }
  return rows;
}

std::string count_bucket(std::size_t count) {
  if (count >= 4) {
    return "4+";
  }
  return std::to_string(count);
}

std::vector<BucketRow> bucket_accuracy(std::span<const EvalRecord> records, std::size_t resamples, double level,
                                       std::uint64_t seed) {
  std::vector<std::string> methods;
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  for (const auto& r : records) {
    if (std::isnan(r.acc)) {
      continue;
    }
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) {
      methods.push_back(r.method);
    }
    groups[{r.method, count_bucket(r.gold_count)}].push_back(r.acc);
  }
  std::vector<BucketRow> rows;
  for (const auto& m : methods) {
    for (const char* b : {"1", "2", "3", "4+"}) {
      auto it = groups.find({m, b});
      if (it == groups.end()) {
        log_info(m + ": bucket " + b + " has no samples, omitted");
        continue;
      }
      BucketRow row;
      row.method = m;
      row.bucket = b;
      row.n = it->second.size();
      row.acc = bootstrap_ci(it->second, resamples, level, seed);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n\r") == std::string::npos) {
    return text;
  }
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') {
      out += '"';
    }
    out += c;
  }
  out += '"';
  return out;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path, const Preamble& preamble) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write " + path.string());
  }
  out.precision(6);
  out << std::fixed;
  for (const auto& [k, v] : preamble) {
    out << "# " << k << '=' << v << '\n';
  }
  return out;
}

void close_csv(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) {
    throw DataError("write failed: " + path.string());
  }
}

std::string acc_cell(double acc) { return std::isnan(acc) ? std::string() : std::to_string(acc); }

}  // namespace

void write_records_csv(const std::filesystem::path& path, std::span<const EvalRecord> records,
                       const Preamble& preamble) {
  auto out = open_csv(path, preamble);
  out << "sample_id,method,gold_count,acc,em,chrf,truncated,score,predicted,output\n";
  for (const auto& r : records) {
    std::string pred;
    for (std::size_t i = 0; i < r.predicted.size(); ++i) {
      pred += (i ? " " : "") + std::to_string(r.predicted[i]);
    }
    out << csv_field(r.sample_id) << ',' << csv_field(r.method) << ',' << r.gold_count << ',' << acc_cell(r.acc)
        << ',' << r.em << ',' << r.chrf << ',' << (r.truncated ? 1 : 0) << ',' << r.score << ',' << pred << ','
        << csv_field(r.output) << '\n';
  }
  close_csv(out, path);
}

void write_summary_csv(const std::filesystem::path& path, std::span<const MethodSummary> rows,
                       const Preamble& preamble) {
  auto out = open_csv(path, preamble);
  out << "method,metric,value,n\n";
  for (const auto& m : rows) {
    const std::string method = csv_field(m.method);
    out << method << ",acc," << m.acc << ',' << m.n_acc << '\n';
    out << method << ",em," << m.em << ',' << m.n << '\n';
    out << method << ",chrf," << m.chrf << ',' << m.n << '\n';
    out << method << ",truncated," << static_cast<double>(m.truncated) << ',' << m.n << '\n';
  }
  close_csv(out, path);
}

void write_buckets_csv(const std::filesystem::path& path, std::span<const BucketRow> rows,
                       const Preamble& preamble) {
  auto out = open_csv(path, preamble);
  out << "method,bucket,n,mean_acc,ci_lo,ci_hi\n";
  for (const auto& b : rows) {
    out << csv_field(b.method) << ',' << b.bucket << ',' << b.n << ',' << b.acc.mean << ',' << b.acc.lo << ','
        << b.acc.hi << '\n';
  }
  close_csv(out, path);
}

}  // namespace entdec
