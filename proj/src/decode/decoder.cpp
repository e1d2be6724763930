#include "lacap/decode/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <stdexcept>

namespace lacap::decode {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool ranks_before(const Hypothesis& a, const Hypothesis& b, bool length_normalize) {
  const double sa = length_normalize ? a.score / static_cast<double>(a.tokens.size()) : a.score;
  const double sb = length_normalize ? b.score / static_cast<double>(b.tokens.size()) : b.score;
  if (sa != sb) return sa > sb;
  return a.tokens < b.tokens;
}

void finish(DecodeResult& result, std::vector<Hypothesis> completed, std::vector<Hypothesis> live,
            bool length_normalize) {
  const auto order = [&](const Hypothesis& a, const Hypothesis& b) { return ranks_before(a, b, length_normalize); };
  if (completed.empty()) {
    if (live.empty()) throw std::runtime_error("decode: every word is masked");
    std::sort(live.begin(), live.end(), order);
    result.truncated = true;
    result.ranked.push_back(std::move(live.front()));
    return;
  }
  std::sort(completed.begin(), completed.end(), order);
  result.ranked = std::move(completed);
}

}  // namespace

DecodeResult lookahead_beam_search(const Scorer& scorer, const BeamConfig& config) {
  if (config.beam == 0) throw std::invalid_argument("lookahead_beam_search: beam width must be at least 1");
  if (!(config.lambda >= 0.0 && config.lambda <= 1.0))
    throw std::invalid_argument("lookahead_beam_search: lambda must lie in [0, 1]");
  if (config.max_len == 0) throw std::invalid_argument("lookahead_beam_search: max_len must be at least 1");
  const double lambda = config.lambda;
  const bool use_value = lambda < 1.0;

  struct Live {
    Hypothesis hyp;
    std::any state;
  };
  struct Candidate {
    std::size_t parent;
    TokenId word;
    double score;
    StepTrace step;
  };

  DecodeResult result;
  std::vector<Live> live;
  live.push_back({Hypothesis{}, scorer.root()});
  std::vector<Hypothesis> completed;

  for (std::size_t t = 0; t < config.max_len && !live.empty() && completed.size() < config.beam; ++t) {
    const std::size_t room = config.beam - completed.size();
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < live.size(); ++i) {
      const Vec lp = scorer.log_probs(live[i].state);
      const Vec values = use_value ? scorer.extension_values(live[i].state) : Vec{};
      for (std::size_t w = 0; w < lp.size(); ++w) {
        if (lp[w] == kNegInf) continue;
        double score = live[i].hyp.score + lambda * lp[w];
        StepTrace step{lp[w], 0.0};
        if (use_value) {
          score += (1.0 - lambda) * values[w];
          step.value = values[w];
        }
        cands.push_back({i, static_cast<TokenId>(w), score, step});
      }
    }
    // Parents share a length, so (parent tokens, word) orders whole sequences.
    const auto better = [&](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      const auto& pa = live[a.parent].hyp.tokens;
      const auto& pb = live[b.parent].hyp.tokens;
      if (pa != pb) return pa < pb;
      return a.word < b.word;
    };
    const std::size_t keep = std::min(room, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(keep), cands.end(), better);

    std::vector<Live> next;
    std::vector<Sentence> kept;
    for (std::size_t k = 0; k < keep; ++k) {
      const Candidate& c = cands[k];
      const Live& parent = live[c.parent];
      Hypothesis h = parent.hyp;
      h.tokens.push_back(c.word);
      h.score = c.score;
      h.trace.push_back(c.step);
      kept.push_back(h.tokens);
      if (c.word == world::Vocab::kEos) {
        h.completed = true;
        completed.push_back(std::move(h));
      } else {
        next.push_back({std::move(h), scorer.advance(parent.state, c.word)});
      }
    }
    result.kept.push_back(std::move(kept));
    live = std::move(next);
  }

  std::vector<Hypothesis> remaining;
  for (auto& l : live) remaining.push_back(std::move(l.hyp));
  finish(result, std::move(completed), std::move(remaining), config.length_normalize);
  return result;
}

DecodeResult beam_search(const Scorer& scorer, std::size_t beam, std::size_t max_len, bool length_normalize) {
  if (beam == 0) throw std::invalid_argument("beam_search: beam width must be at least 1");
  if (max_len == 0) throw std::invalid_argument("beam_search: max_len must be at least 1");
  struct Entry {
    Hypothesis hyp;
    std::any state;
  };
  DecodeResult result;
  std::vector<Entry> beams{{Hypothesis{}, scorer.root()}};
  std::vector<Hypothesis> done;
  for (std::size_t t = 0; t < max_len; ++t) {
    if (beams.empty() || done.size() >= beam) break;
    std::vector<std::pair<Hypothesis, std::size_t>> pool;
    for (std::size_t i = 0; i < beams.size(); ++i) {
      const Vec lp = scorer.log_probs(beams[i].state);
      for (std::size_t w = 0; w < lp.size(); ++w) {
        if (std::isinf(lp[w])) continue;
        Hypothesis h = beams[i].hyp;
        h.tokens.push_back(static_cast<TokenId>(w));
        h.score += lp[w];
        h.trace.push_back({lp[w], 0.0});
        pool.emplace_back(std::move(h), i);
      }
    }
    std::sort(pool.begin(), pool.end(),
              [](const auto& a, const auto& b) { return ranks_before(a.first, b.first, false); });
    pool.resize(std::min(pool.size(), beam - done.size()));
    std::vector<Entry> next;
    std::vector<Sentence> kept;
    for (auto& [h, parent] : pool) {
      kept.push_back(h.tokens);
      if (h.tokens.back() == world::Vocab::kEos) {
        h.completed = true;
        done.push_back(std::move(h));
      } else {
        std::any s = scorer.advance(beams[parent].state, h.tokens.back());
        next.push_back({std::move(h), std::move(s)});
      }
    }
    result.kept.push_back(std::move(kept));
    beams = std::move(next);
  }
  std::vector<Hypothesis> remaining;
  for (auto& e : beams) remaining.push_back(std::move(e.hyp));
  finish(result, std::move(done), std::move(remaining), length_normalize);
  return result;
}

DecodeResult greedy_decode(const Scorer& scorer, std::size_t max_len) {
  if (max_len == 0) throw std::invalid_argument("greedy_decode: max_len must be at least 1");
  DecodeResult result;
  Hypothesis h;
  std::any state = scorer.root();
  for (std::size_t t = 0; t < max_len; ++t) {
    const Vec lp = scorer.log_probs(state);
    std::size_t best = lp.size();
    for (std::size_t w = 0; w < lp.size(); ++w)
      if (lp[w] != kNegInf && (best == lp.size() || lp[w] > lp[best])) best = w;
    if (best == lp.size()) throw std::runtime_error("decode: every word is masked");
    h.tokens.push_back(static_cast<TokenId>(best));
    h.score += lp[best];
    h.trace.push_back({lp[best], 0.0});
    result.kept.push_back({h.tokens});
    if (best == world::Vocab::kEos) {
      h.completed = true;
      break;
    }
    state = scorer.advance(state, static_cast<TokenId>(best));
  }
  result.truncated = !h.completed;
  result.ranked.push_back(std::move(h));
  return result;
}

// ---------------------------------------------------------------- models

ModelContext::ModelContext(const policy::PolicyNet& policy, const critic::ValueNet* value)
    : policy_(policy), value_(value) {
  const auto gate_table = [](const cells::ParamStore& store, const cells::LstmCell& lstm, cells::ParamId table,
                             std::size_t vocab) {
    const auto& words = store.value(table);
    const std::size_t dim = lstm.in_dim();
    std::vector<double> out;
    out.reserve(vocab * 4 * lstm.hidden_dim());
    for (std::size_t w = 0; w < vocab; ++w) {
      const Vec g = lstm.input_gates(store, words.data().subspan(w * dim, dim));
      out.insert(out.end(), g.begin(), g.end());
    }
    return out;
  };
  policy_gates_ = gate_table(policy.store(), policy.lstm(), policy.word_table_id(), policy.vocab_size());
  if (value && value->variant() == critic::ValueVariant::full) {
    if (value->config().vocab_size != policy.vocab_size())
      throw std::invalid_argument("ModelContext: policy and value vocabularies differ");
    value_gates_ = gate_table(value->store(), value->lstm(), value->word_table_id(), policy.vocab_size());
  }
}

std::span<const double> ModelContext::policy_input_gates(TokenId w) const {
  const std::size_t g = 4 * policy_.lstm().hidden_dim();
  return std::span(policy_gates_).subspan(w * g, g);
}

std::span<const double> ModelContext::value_input_gates(TokenId w) const {
  const std::size_t g = 4 * value_->lstm().hidden_dim();
  return std::span(value_gates_).subspan(w * g, g);
}

ModelScorer::ModelScorer(const ModelContext& context, std::span<const double> feature, policy::MaskMode mode)
    : ctx_(context), feature_(feature.begin(), feature.end()), mode_(mode) {
  image_input_ = ctx_.policy().image_input(feature_);
  if (const auto* v = ctx_.value()) {
    const auto& first = v->mlp().layers().front();
    switch (v->variant()) {
      case critic::ValueVariant::full: mlp_partial_ = first.partial(v->store(), v->start(feature_).visual); break;
      case critic::ValueVariant::hid: mlp_partial_ = first.partial(v->store(), {}); break;
      case critic::ValueVariant::hid_im: mlp_partial_ = first.partial(v->store(), image_input_); break;
    }
  }
}

std::size_t ModelScorer::vocab_size() const { return ctx_.policy().vocab_size(); }

std::any ModelScorer::root() const {
  State s{ctx_.policy().init_state(feature_), {}};
  if (const auto* v = ctx_.value()) s.value = v->start(feature_);
  return s;
}

Vec ModelScorer::log_probs(const std::any& state) const {
  return ctx_.policy().log_probs(std::any_cast<const State&>(state).policy, mode_);
}

Vec ModelScorer::extension_values(const std::any& state) const {
  const auto* v = ctx_.value();
  if (!v) throw std::logic_error("ModelScorer: no value network attached");
  const State& s = std::any_cast<const State&>(state);
  const auto& first = v->mlp().layers().front();
  const std::size_t vocab = vocab_size();
  Vec out(vocab);
  if (v->variant() == critic::ValueVariant::full) {
    const Vec rec = v->lstm().recurrent_gates(v->store(), s.value.lstm.h);
    for (std::size_t w = 0; w < vocab; ++w) {
      const auto next = v->lstm().combine(v->store(), s.value.lstm, ctx_.value_input_gates(static_cast<TokenId>(w)), rec);
      out[w] = std::tanh(v->mlp().forward_after_first(v->store(), first.finish(v->store(), mlp_partial_, next.h))[0]);
    }
  } else {
    const auto& p = ctx_.policy();
    const Vec rec = p.lstm().recurrent_gates(p.store(), s.policy.lstm.h);
    for (std::size_t w = 0; w < vocab; ++w) {
      const auto next = p.lstm().combine(p.store(), s.policy.lstm, ctx_.policy_input_gates(static_cast<TokenId>(w)), rec);
      out[w] = std::tanh(v->mlp().forward_after_first(v->store(), first.finish(v->store(), mlp_partial_, next.h))[0]);
    }
  }
  return out;
}

std::any ModelScorer::advance(const std::any& state, TokenId word) const {
  const State& s = std::any_cast<const State&>(state);
  State next{ctx_.policy().advance(s.policy, word), s.value};
  if (const auto* v = ctx_.value()) next.value = v->advance(s.value, word);
  return next;
}

Sentence greedy_decode(const policy::PolicyNet& policy, std::span<const double> feature, std::size_t max_len) {
  const ModelContext ctx(policy, nullptr);
  return greedy_decode(ModelScorer(ctx, feature), max_len).best().tokens;
}

const Hypothesis& embed_rerank(std::span<const Hypothesis> candidates, const embed::EmbedModel& embed,
                               std::span<const double> feature) {
  if (candidates.empty()) throw std::invalid_argument("embed_rerank: no candidates");
  std::size_t best = 0;
  double best_reward = embed.reward(feature, candidates[0].tokens);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double r = embed.reward(feature, candidates[i].tokens);
    const auto& a = candidates[i];
    const auto& b = candidates[best];
    const bool wins = r != best_reward ? r > best_reward
                      : a.score != b.score ? a.score > b.score
                                           : a.tokens < b.tokens;
    if (wins) {
      best = i;
      best_reward = r;
    }
  }
  return candidates[best];
}

std::vector<DecodeResult> decode_batch(const ModelContext& context, std::span<const world::Feature> features,
                                       const BeamConfig& config, bool parallel) {
  std::vector<DecodeResult> out(features.size());
  std::exception_ptr error;
  const long n = static_cast<long>(features.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (long i = 0; i < n; ++i) {
    try {
      out[i] = lookahead_beam_search(ModelScorer(context, features[i]), config);
    } catch (...) {
#pragma omp critical(lacap_decode_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace lacap::decode
