#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "entdec/sample.hpp"
#include "entdec/vocab.hpp"

namespace entdec {

/// What the decoder is trained to emit for entity references.
enum class TargetMode {
  entity_tokens,  // one dynamic id V + j per reference
  names,          // the entity name's tokens, generated like any other text
};

struct EncodeOptions {
  std::size_t max_input_len = 256;
  std::size_t max_entity_len = 64;
  std::size_t max_target_len = 256;  // including the final EOS
  bool include_entities = true;
  TargetMode target_mode = TargetMode::entity_tokens;
};

/// A sample in id space. Entity j of the sample is dynamic id V + j.
struct EncodedSample {
  std::string id;
  std::vector<std::int64_t> input;
  std::vector<std::vector<std::int64_t>> descriptions;
  std::vector<std::int64_t> target;  // ends with EOS unless truncated
  bool input_truncated = false;
  std::size_t descriptions_truncated = 0;
  bool target_truncated = false;

  std::size_t entity_count() const noexcept { return descriptions.size(); }
};

EncodedSample encode_sample(const Sample& s, const Vocabulary& vocab, const EncodeOptions& options);

/// Encodes every sample and emits one warning summarizing truncations.
std::vector<EncodedSample> encode_dataset(const Dataset& data, const Vocabulary& vocab,
                                          const EncodeOptions& options);

}  // namespace entdec
