#include "entdec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "entdec/errors.hpp"

namespace entdec {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are written in native little-endian order");

namespace {

std::string shape_field(const Shape& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    s += (i ? "x" : "") + std::to_string(shape[i]);
  }
  return s.empty() ? "scalar" : s;
}

Shape parse_shape(const std::string& field) {
  Shape shape;
  if (field == "scalar") {
    return shape;
  }
  std::stringstream ss(field);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    shape.push_back(static_cast<std::size_t>(std::stoull(part)));
  }
  return shape;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const EntityModel<float>& model, const Vocabulary& vocab,
                     const std::map<std::string, std::string>& meta) {
  if (vocab.size() != model.base_vocab()) {
    throw UsageError("save_checkpoint: vocabulary has " + std::to_string(vocab.size()) + " tokens, model expects " +
                     std::to_string(model.base_vocab()));
  }
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  manifest << "format entdec-checkpoint\n";
  manifest << "version " << kCheckpointVersion << '\n';
  for (const auto& [k, v] : model.config().to_map()) {
    manifest << "config " << k << ' ' << v << '\n';
  }
  for (const auto& [k, v] : meta) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw UsageError("checkpoint metadata keys may not contain spaces or newlines: '" + k + "'");
    }
    manifest << "meta " << k << ' ' << v << '\n';
  }
  manifest << "vocab_hash " << vocab.hash_hex() << '\n';
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    manifest << "vocab " << i << ' ' << vocab.token(static_cast<std::int64_t>(i)) << '\n';
  }

  std::ofstream blob(dir / "params.bin", std::ios::binary);
  if (!blob) {
    throw DataError("cannot write " + (dir / "params.bin").string());
  }
  std::size_t offset = 0;
  for (const auto& [name, t] : model.parameters()) {
    const std::size_t bytes = t.numel() * sizeof(float);
    manifest << "param " << name << ' ' << shape_field(t.shape()) << ' ' << offset << ' ' << bytes << '\n';
    blob.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(bytes));
    offset += bytes;
  }
  blob.close();
  std::ofstream out(dir / "manifest.txt", std::ios::binary);
  if (!out) {
    throw DataError("cannot write " + (dir / "manifest.txt").string());
  }
  out << manifest.str();
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.txt";
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) {
    throw DataError("cannot read " + manifest_path.string());
  }
  auto fail = [&manifest_path](std::size_t line, const std::string& why) {
    return DataError(manifest_path.string() + ":" + std::to_string(line) + ": " + why);
  };

  struct ParamRecord {
    std::string name;
    Shape shape;
    std::size_t offset;
    std::size_t length;
  };
  std::map<std::string, std::string> config;
  std::map<std::string, std::string> meta;
  std::vector<std::string> tokens;
  std::vector<ParamRecord> records;
  std::string hash;
  bool format_ok = false;
  int version = -1;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    const auto sp = line.find(' ');
    if (sp == std::string::npos) {
      throw fail(line_no, "expected 'key value'");
    }
    const std::string key = line.substr(0, sp);
    const std::string rest = line.substr(sp + 1);
    try {
      if (key == "format") {
        format_ok = rest == "entdec-checkpoint";
      } else if (key == "version") {
        version = std::stoi(rest);
      } else if (key == "config" || key == "meta") {
        const auto sp2 = rest.find(' ');
        if (sp2 == std::string::npos) {
          throw fail(line_no, "expected '" + key + " name value'");
        }
        (key == "config" ? config : meta)[rest.substr(0, sp2)] = rest.substr(sp2 + 1);
      } else if (key == "vocab_hash") {
        hash = rest;
      } else if (key == "vocab") {
        const auto sp2 = rest.find(' ');
        if (sp2 == std::string::npos || std::stoull(rest.substr(0, sp2)) != tokens.size()) {
          throw fail(line_no, "vocabulary entries must be numbered consecutively");
        }
        tokens.push_back(rest.substr(sp2 + 1));
      } else if (key == "param") {
        std::istringstream ss(rest);
        ParamRecord r;
        std::string shape;
        if (!(ss >> r.name >> shape >> r.offset >> r.length)) {
          throw fail(line_no, "expected 'param name shape offset length'");
        }
        r.shape = parse_shape(shape);
        records.push_back(std::move(r));
      } else {
        throw fail(line_no, "unknown key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw fail(line_no, "malformed number");
    }
  }
  if (!format_ok) {
    throw DataError(manifest_path.string() + ": not an entdec checkpoint manifest");
  }
  if (version != kCheckpointVersion) {
    throw DataError(manifest_path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }

  Checkpoint ck{EntityModel<float>{}, Vocabulary::from_tokens(tokens), std::move(meta)};
  if (ck.vocab.hash_hex() != hash) {
    throw DataError(manifest_path.string() + ": vocabulary hash " + ck.vocab.hash_hex() +
                    " does not match recorded " + hash);
  }
  const ModelConfig cfg = ModelConfig::from_map(config);
  if (cfg.vocab_size != ck.vocab.size()) {
    throw DataError(manifest_path.string() + ": config vocab_size disagrees with the vocabulary");
  }
  ck.model = EntityModel<float>(cfg, 0);

  const auto blob_path = dir / "params.bin";
  std::ifstream blob(blob_path, std::ios::binary | std::ios::ate);
  if (!blob) {
    throw DataError("cannot read " + blob_path.string());
  }
  const auto blob_size = static_cast<std::size_t>(blob.tellg());
  auto params = ck.model.parameters();
  if (params.size() != records.size()) {
    throw DataError(manifest_path.string() + ": " + std::to_string(records.size()) + " parameter records, model has " +
                    std::to_string(params.size()));
  }
  std::size_t expected_offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, t] = params[i];
    const auto& r = records[i];
    if (r.name != name || r.shape != t.shape() || r.length != t.numel() * sizeof(float) || r.offset != expected_offset) {
      throw DataError(manifest_path.string() + ": parameter record '" + r.name + "' does not match model tensor '" +
                      name + "' " + shape_string(t.shape()));
    }
    if (r.offset + r.length > blob_size) {
      throw DataError(blob_path.string() + ": truncated (" + std::to_string(blob_size) + " bytes, need " +
                      std::to_string(r.offset + r.length) + ")");
    }
    blob.seekg(static_cast<std::streamoff>(r.offset));
    blob.read(reinterpret_cast<char*>(t.mutable_data().data()), static_cast<std::streamsize>(r.length));
    if (!blob) {
      throw DataError(blob_path.string() + ": read failed for '" + name + "'");
    }
    expected_offset += r.length;
  }
  if (expected_offset != blob_size) {
    throw DataError(blob_path.string() + ": " + std::to_string(blob_size - expected_offset) + " trailing bytes");
  }
  return ck;
}

void require_same_vocab(const Vocabulary& model_vocab, const Vocabulary& data_vocab) {
  if (model_vocab.hash() != data_vocab.hash()) {
    throw DataError("vocabulary hash mismatch: model " + model_vocab.hash_hex() + ", dataset " +
                    data_vocab.hash_hex() + " (was the model trained on this dataset?)");
  }
}

}  // namespace entdec
