#include "entdec/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "entdec/errors.hpp"
#include "json.hpp"

namespace entdec {

namespace {

std::int64_t argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < v.size(); ++k) {
    if (v[k] > v[best]) {
      best = k;
    }
  }
  return static_cast<std::int64_t>(best);
}

struct Candidate {
  double score;
  std::size_t parent;
  std::int64_t token;
};

bool better(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) {
    return a.score > b.score;
  }
  if (a.parent != b.parent) {
    return a.parent < b.parent;
  }
  return a.token < b.token;
}

}  // namespace

Hypothesis greedy_search(Stepper& stepper, std::size_t max_len) {
  Hypothesis h;
  auto state = stepper.start();
  for (std::size_t t = 0; t < max_len; ++t) {
    const std::int64_t tok = argmax(state->log_probs);
    h.score += state->log_probs[static_cast<std::size_t>(tok)];
    if (tok == stepper.eos()) {
      h.finished = true;
      return h;
    }
    h.ids.push_back(tok);
    if (t + 1 < max_len) {
      state = stepper.extend(*state, tok);
    }
  }
  return h;
}

std::vector<Hypothesis> beam_search(Stepper& stepper, std::size_t beam, std::size_t max_len) {
  if (beam == 0) {
    throw UsageError("beam size must be at least 1");
  }
  struct Live {
    Hypothesis hyp;
    std::shared_ptr<const StepState> state;
  };
  std::vector<Live> alive;
  alive.push_back({Hypothesis{}, stepper.start()});
  std::vector<Hypothesis> finished;

  for (std::size_t t = 0; t < max_len && !alive.empty(); ++t) {
    std::vector<Candidate> cands;
    for (std::size_t p = 0; p < alive.size(); ++p) {
      const auto& lp = alive[p].state->log_probs;
      for (std::size_t k = 0; k < lp.size(); ++k) {
        if (lp[k] == -std::numeric_limits<double>::infinity()) {
          continue;
        }
        cands.push_back({alive[p].hyp.score + lp[k], p, static_cast<std::int64_t>(k)});
      }
    }
    const std::size_t keep = std::min(beam, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), better);
    cands.resize(keep);

    std::vector<Live> next;
    for (const auto& c : cands) {
      Hypothesis h = alive[c.parent].hyp;
      h.score = c.score;
      if (c.token == stepper.eos()) {
        h.finished = true;
        finished.push_back(std::move(h));
        continue;
      }
      h.ids.push_back(c.token);
      auto state = t + 1 < max_len ? stepper.extend(*alive[c.parent].state, c.token) : alive[c.parent].state;
      next.push_back({std::move(h), std::move(state)});
    }
    alive = std::move(next);

    if (!finished.empty() && !alive.empty()) {
      double best_finished = -std::numeric_limits<double>::infinity();
      for (const auto& f : finished) {
        best_finished = std::max(best_finished, f.score);
      }
      // Scores only decrease as hypotheses grow.
      if (best_finished >= alive.front().hyp.score) {
        break;
      }
    }
  }

  std::vector<Hypothesis> out;
  if (!finished.empty()) {
    out = std::move(finished);
  } else {
    for (auto& l : alive) {
      out.push_back(std::move(l.hyp));
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Hypothesis& a, const Hypothesis& b) { return a.score > b.score; });
  return out;
}

template <typename S>
struct ModelStepper<S>::State : StepState {
  KVCache<S> cache;
};

template <typename S>
ModelStepper<S>::ModelStepper(const EntityModel<S>& model, const EncodedSample& sample)
    : model_(&model), ctx_(model.prepare_decode(sample)) {}

template <typename S>
std::shared_ptr<const StepState> ModelStepper<S>::feed(KVCache<S> cache, std::int64_t token) {
  auto st = std::make_shared<State>();
  const Tensor<S> logits = model_->step_logits(ctx_, cache, token);
  const auto row = logits.data();
  double mx = -std::numeric_limits<double>::infinity();
  for (auto v : row) {
    mx = std::max(mx, static_cast<double>(v));
  }
  double z = 0.0;
  for (auto v : row) {
    z += std::exp(static_cast<double>(v) - mx);
  }
  const double log_z = mx + std::log(z);
  st->log_probs.resize(row.size());
  for (std::size_t k = 0; k < row.size(); ++k) {
    st->log_probs[k] = static_cast<double>(row[k]) - log_z;
  }
  st->cache = std::move(cache);
  return st;
}

template <typename S>
std::shared_ptr<const StepState> ModelStepper<S>::start() {
  return feed(KVCache<S>{}, Vocabulary::bos_id);
}

template <typename S>
std::shared_ptr<const StepState> ModelStepper<S>::extend(const StepState& state, std::int64_t token) {
  const auto& st = dynamic_cast<const State&>(state);
  return feed(st.cache, token);
}

template class ModelStepper<float>;
template class ModelStepper<double>;

std::string substitute_entities(std::span<const std::int64_t> ids, const Vocabulary& vocab,
                                std::span<const Entity> entities) {
  const auto V = static_cast<std::int64_t>(vocab.size());
  std::vector<std::string> toks;
  for (auto id : ids) {
    if (id >= V) {
      const auto j = static_cast<std::size_t>(id - V);
      if (j >= entities.size()) {
        throw IndexError("dynamic id " + std::to_string(id) + " maps to entity " + std::to_string(j) +
                         " but the sample has " + std::to_string(entities.size()));
      }
      toks.push_back(entities[j].name);
    } else if (id != Vocabulary::pad_id && id != Vocabulary::bos_id && id != Vocabulary::eos_id) {
      toks.push_back(vocab.token(id));
    }
  }
  return join_tokens(toks);
}

std::vector<std::size_t> entities_in(std::span<const std::int64_t> ids, std::size_t base_vocab) {
  std::set<std::size_t> used;
  for (auto id : ids) {
    if (id >= static_cast<std::int64_t>(base_vocab)) {
      used.insert(static_cast<std::size_t>(id) - base_vocab);
    }
  }
  return {used.begin(), used.end()};
}

template <typename S>
DecodeResult decode(const EntityModel<S>& model, const Vocabulary& vocab, const Sample& sample,
                    const EncodedSample& encoded, const DecodeOptions& options) {
  if (vocab.size() != model.base_vocab()) {
    throw UsageError("vocabulary size " + std::to_string(vocab.size()) + " does not match the model's " +
                     std::to_string(model.base_vocab()));
  }
  ModelStepper<S> stepper(model, encoded);
  const std::size_t max_len = std::min(options.max_len, model.config().max_seq_len);
  Hypothesis best = options.beam <= 1 ? greedy_search(stepper, max_len)
                                      : beam_search(stepper, options.beam, max_len).front();
  DecodeResult r;
  r.ids = std::move(best.ids);
  r.score = best.score;
  r.finished = best.finished;
  r.output = substitute_entities(r.ids, vocab, sample.entities);
  r.entities_used = entities_in(r.ids, vocab.size());
  return r;
}

template DecodeResult decode(const EntityModel<float>&, const Vocabulary&, const Sample&, const EncodedSample&,
                             const DecodeOptions&);
template DecodeResult decode(const EntityModel<double>&, const Vocabulary&, const Sample&, const EncodedSample&,
                             const DecodeOptions&);

std::string decode_result_json(const std::string& sample_id, const DecodeResult& result,
                               std::span<const Entity> entities) {
  nlohmann::ordered_json j;
  j["sample_id"] = sample_id;
  j["output"] = result.output;
  j["entities_used"] = nlohmann::ordered_json::array();
  for (auto e : result.entities_used) {
    j["entities_used"].push_back(entities[e].name);
  }
  j["score"] = result.score;
  return j.dump();
}

}  // namespace entdec
