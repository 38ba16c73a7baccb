#include "entdec/batch.hpp"

#include "entdec/errors.hpp"
#include "entdec/log.hpp"

namespace entdec {

EncodedSample encode_sample(const Sample& s, const Vocabulary& vocab, const EncodeOptions& options) {
  EncodedSample e;
  e.id = s.id;
  e.input = vocab.encode(s.input);
  if (e.input.empty()) {
    e.input.push_back(Vocabulary::unk_id);  // the encoder needs at least one row
  }
  if (e.input.size() > options.max_input_len) {
    e.input.resize(options.max_input_len);
    e.input_truncated = true;
  }
  if (options.include_entities) {
    for (const auto& ent : s.entities) {
      auto ids = vocab.encode(ent.description);
      if (ids.size() > options.max_entity_len) {
        ids.resize(options.max_entity_len);
        ++e.descriptions_truncated;
      }
      if (ids.empty()) {
        throw DataError("sample '" + s.id + "': entity '" + ent.name + "' has an empty description");
      }
      e.descriptions.push_back(std::move(ids));
    }
  }
  if (options.target_mode == TargetMode::entity_tokens) {
    if (!options.include_entities) {
      throw UsageError("entity-token targets need the sample's entities");
    }
    e.target = target_dynamic_ids(s, vocab);
  } else {
    e.target = vocab.encode(render_target_names(s));
  }
  e.target.push_back(Vocabulary::eos_id);
  if (e.target.size() > options.max_target_len) {
    e.target.resize(options.max_target_len);
    e.target_truncated = true;
  }
  return e;
}

std::vector<EncodedSample> encode_dataset(const Dataset& data, const Vocabulary& vocab,
                                          const EncodeOptions& options) {
  std::vector<EncodedSample> out;
  out.reserve(data.size());
  std::size_t inputs = 0;
  std::size_t descs = 0;
  std::size_t targets = 0;
  for (const auto& s : data) {
    out.push_back(encode_sample(s, vocab, options));
    inputs += out.back().input_truncated ? 1 : 0;
    descs += out.back().descriptions_truncated;
    targets += out.back().target_truncated ? 1 : 0;
  }
  if (inputs + descs + targets > 0) {
    log_warn("truncated " + std::to_string(inputs) + " inputs (max " + std::to_string(options.max_input_len) +
             "), " + std::to_string(descs) + " descriptions (max " + std::to_string(options.max_entity_len) +
             "), " + std::to_string(targets) + " targets");
  }
  return out;
}

}  // namespace entdec
