#pragma once

#include <string>
#include <vector>

#include "entdec/batch.hpp"
#include "entdec/config.hpp"
#include "entdec/gradcheck.hpp"

namespace entdec {

struct GradCheckCase {
  std::string name;
  GradCheckReport report;
};

/// d=8, V=12, two heads, one layer per stack, no dropout.
ModelConfig gradcheck_toy_config(RetrieverVariant variant);

/// Two samples with 3 and 2 entities (so one padded slot), targets mixing
/// base tokens and entity tokens.
std::vector<EncodedSample> gradcheck_toy_batch();

/// Central differences over every parameter of the whole model in 64-bit.
GradCheckReport gradcheck_full_model(RetrieverVariant variant, const GradCheckOptions& options = {});

/// Individual ops, then the full model for each retriever variant.
std::vector<GradCheckCase> run_gradcheck_suite(const GradCheckOptions& options = {});

}  // namespace entdec
