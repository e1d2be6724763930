#include "lacap/policy_net/policy.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "lacap/numcore/kernels.hpp"

namespace lacap::policy {

std::vector<unsigned char> action_mask(std::size_t vocab_size, MaskMode mode) {
  std::vector<unsigned char> m(vocab_size, 1);
  if (mode == MaskMode::none) return m;
  if (vocab_size <= world::Vocab::kPad) throw std::invalid_argument("action_mask: vocabulary lacks reserved tokens");
  m[world::Vocab::kPad] = 0;
  if (mode == MaskMode::generation) m[world::Vocab::kUnk] = 0;
  return m;
}

PolicyNet::PolicyNet(const PolicyConfig& config, std::uint64_t seed) : config_(config) {
  if (config.vocab_size < 2) throw std::invalid_argument("PolicyNet: vocabulary needs at least 2 tokens");
  num::Rng rng(seed);
  image_ = cells::Linear(store_, "policy.image", config.feature_dim, config.hidden, false, rng);
  words_ = store_.add_uniform("policy.words", {config.vocab_size, config.hidden}, cells::kInitScale, rng);
  lstm_ = cells::LstmCell(store_, "policy.lstm", config.hidden, config.hidden, rng);
  out_ = cells::Linear(store_, "policy.out", config.hidden, config.vocab_size, true, rng);
  masks_[0] = action_mask(config.vocab_size, MaskMode::none);
  if (config.vocab_size > world::Vocab::kPad) {
    masks_[1] = action_mask(config.vocab_size, MaskMode::likelihood);
    masks_[2] = action_mask(config.vocab_size, MaskMode::generation);
  }
}

std::span<const unsigned char> PolicyNet::mask(MaskMode mode) const {
  const auto& m = masks_[static_cast<int>(mode)];
  if (m.empty()) throw std::invalid_argument("PolicyNet: vocabulary too small for this mask mode");
  return m;
}

void PolicyNet::check_token(TokenId word) const {
  if (word >= config_.vocab_size)
    throw std::out_of_range("policy: token " + std::to_string(word) + " outside vocabulary of " +
                            std::to_string(config_.vocab_size));
}

Vec PolicyNet::image_input(std::span<const double> feature) const { return image_.forward(store_, feature); }

PolicyState PolicyNet::init_state(std::span<const double> feature) const {
  const Vec x0 = image_input(feature);
  return {lstm_.step(store_, lstm_.zero_state(), x0), 0};
}

Vec PolicyNet::log_probs(const PolicyState& state, MaskMode mode) const {
  const Vec logits = out_.forward(store_, state.lstm.h);
  Vec out(logits.size());
  num::kernels::log_softmax(logits, mask(mode), out);
  return out;
}

PolicyState PolicyNet::advance(const PolicyState& state, TokenId word) const {
  check_token(word);
  const auto row = store_.value(words_).data().subspan(word * config_.hidden, config_.hidden);
  return {lstm_.step(store_, state.lstm, row), state.t + 1};
}

std::pair<PolicyState, Vec> PolicyNet::step(const PolicyState& state, TokenId word, MaskMode mode) const {
  PolicyState next = advance(state, word);
  Vec lp = log_probs(next, mode);
  return {std::move(next), std::move(lp)};
}

double PolicyNet::sequence_logprob(std::span<const double> feature, std::span<const TokenId> sentence,
                                   MaskMode mode) const {
  if (sentence.empty()) throw std::invalid_argument("sequence_logprob: empty sentence");
  PolicyState s = init_state(feature);
  double total = 0.0;
  for (std::size_t t = 0; t < sentence.size(); ++t) {
    check_token(sentence[t]);
    total += log_probs(s, mode)[sentence[t]];
    if (t + 1 < sentence.size()) s = advance(s, sentence[t]);
  }
  return total;
}

PolicyNet::Bound PolicyNet::bind(Tape& tape) {
  return {image_.bind(store_, tape), store_.bind(tape, words_), lstm_.bind(store_, tape), out_.bind(store_, tape)};
}

PolicyNet::TapedState PolicyNet::init_state(Tape& tape, const Bound& p, std::span<const double> feature) const {
  Var f = tape.constant(num::Tensor::vector(Vec(feature.begin(), feature.end())));
  Var x0 = image_.forward(tape, p.image, f);
  return {lstm_.step(tape, p.lstm, lstm_.zero_state(tape), x0), 0};
}

Var PolicyNet::logits(Tape& tape, const Bound& p, const TapedState& state) const {
  return out_.forward(tape, p.out, state.lstm.h);
}

PolicyNet::TapedState PolicyNet::advance(Tape& tape, const Bound& p, const TapedState& state, TokenId word) const {
  check_token(word);
  return {lstm_.step(tape, p.lstm, state.lstm, tape.row(p.words, word)), state.t + 1};
}

Var PolicyNet::sequence_nll(Tape& tape, const Bound& p, std::span<const double> feature,
                            std::span<const TokenId> sentence, MaskMode mode) const {
  if (sentence.empty()) throw std::invalid_argument("sequence_nll: empty sentence");
  TapedState s = init_state(tape, p, feature);
  std::optional<Var> total;
  for (std::size_t t = 0; t < sentence.size(); ++t) {
    Var term = tape.softmax_xent(logits(tape, p, s), sentence[t], mask(mode)).loss;
    total = total ? tape.add(*total, term) : term;
    if (t + 1 < sentence.size()) s = advance(tape, p, s, sentence[t]);
  }
  return *total;
}

std::vector<double> pretrain_policy(PolicyNet& policy, std::span<const world::CaptionedExample> data,
                                    const PretrainConfig& config) {
  if (data.empty()) throw std::invalid_argument("pretrain_policy: empty dataset");
  if (config.batch == 0) throw std::invalid_argument("pretrain_policy: batch must be positive");
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t r = 0; r < data[i].references.size(); ++r) pairs.emplace_back(i, r);
  num::Rng rng(config.seed);
  std::vector<double> curve;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = pairs.size(); i > 1; --i) std::swap(pairs[i - 1], pairs[rng.index(i)]);
    double total = 0.0;
    for (std::size_t start = 0; start < pairs.size(); start += config.batch) {
      const std::size_t end = std::min(pairs.size(), start + config.batch);
      Tape tape;
      auto p = policy.bind(tape);
      std::optional<Var> loss;
      for (std::size_t k = start; k < end; ++k) {
        const auto& ex = data[pairs[k].first];
        Var nll = policy.sequence_nll(tape, p, ex.feature, ex.references[pairs[k].second]);
        total += tape.value(nll).item();
        loss = loss ? tape.add(*loss, nll) : nll;
      }
      Var mean = tape.scale(*loss, 1.0 / static_cast<double>(end - start));
      tape.backward(mean);
      cells::adam_update(policy.store(), {.lr = config.lr});
    }
    curve.push_back(total / static_cast<double>(pairs.size()));
  }
  return curve;
}

double mean_nll(const PolicyNet& policy, std::span<const world::CaptionedExample> data) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& ex : data)
    for (const auto& ref : ex.references) {
      total -= policy.sequence_logprob(ex.feature, ref);
      ++n;
    }
  if (n == 0) throw std::invalid_argument("mean_nll: no sentences");
  return total / static_cast<double>(n);
}

Rollout rollout(const PolicyNet& policy, std::span<const double> feature, num::Rng& rng, std::size_t max_len,
                std::span<const TokenId> prefix, MaskMode mode) {
  if (max_len == 0) throw std::invalid_argument("rollout: max_len must be at least 1");
  Rollout out;
  PolicyState s = policy.init_state(feature);
  std::vector<double> probs(policy.vocab_size());
  while (out.tokens.size() < max_len) {
    const Vec lp = policy.log_probs(s, mode);
    TokenId w;
    if (out.tokens.size() < prefix.size()) {
      w = prefix[out.tokens.size()];
      ++out.forced;
    } else {
      for (std::size_t i = 0; i < lp.size(); ++i) probs[i] = std::exp(lp[i]);
      w = static_cast<TokenId>(rng.categorical(probs));
    }
    out.tokens.push_back(w);
    out.logps.push_back(lp.at(w));
    if (w == world::Vocab::kEos) break;
    if (out.tokens.size() < max_len) s = policy.advance(s, w);
  }
  return out;
}

}  // namespace lacap::policy
