#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "entdec/model.hpp"
#include "entdec/vocab.hpp"

namespace entdec {

inline constexpr int kCheckpointVersion = 1;

/// A checkpoint directory holds manifest.txt (config, vocabulary, metadata
/// and one "param name shape offset length" record per tensor) and
/// params.bin (little-endian float32, tensors concatenated in manifest order).
struct Checkpoint {
  EntityModel<float> model;
  Vocabulary vocab;
  std::map<std::string, std::string> meta;
};

void save_checkpoint(const std::filesystem::path& dir, const EntityModel<float>& model, const Vocabulary& vocab,
                     const std::map<std::string, std::string>& meta = {});

/// Throws DataError on a malformed manifest, unsupported version,
/// vocabulary hash mismatch, missing or misshapen parameters, or a blob of
/// the wrong size.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Refuses (DataError) when a dataset's vocabulary differs from the model's.
void require_same_vocab(const Vocabulary& model_vocab, const Vocabulary& data_vocab);

}  // namespace entdec
