#include "lacap/critic/value_net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace lacap::critic {

std::string to_string(ValueVariant v) {
  switch (v) {
    case ValueVariant::full: return "full";
    case ValueVariant::hid: return "hid-VN";
    case ValueVariant::hid_im: return "hid-Im-VN";
  }
  return "?";
}

ValueVariant parse_value_variant(std::string_view s) {
  if (s == "full") return ValueVariant::full;
  if (s == "hid-VN" || s == "hid") return ValueVariant::hid;
  if (s == "hid-Im-VN" || s == "hid-im") return ValueVariant::hid_im;
  throw std::invalid_argument("unknown value variant '" + std::string(s) + "' (expected full, hid-VN, hid-Im-VN)");
}

ValueNet::ValueNet(const ValueConfig& config, std::uint64_t seed) : config_(config) {
  num::Rng rng(seed);
  std::vector<std::size_t> dims;
  switch (config.variant) {
    case ValueVariant::full:
      if (config.vocab_size == 0) throw std::invalid_argument("ValueNet: vocabulary size must be positive");
      visual_ = cells::Linear(store_, "value.visual", config.feature_dim, config.visual_dim, true, rng);
      words_ = store_.add_uniform("value.words", {config.vocab_size, config.hidden}, cells::kInitScale, rng);
      lstm_ = cells::LstmCell(store_, "value.lstm", config.hidden, config.hidden, rng);
      dims.push_back(config.visual_dim + config.hidden);
      break;
    case ValueVariant::hid: dims.push_back(config.policy_hidden); break;
    case ValueVariant::hid_im: dims.push_back(2 * config.policy_hidden); break;
  }
  dims.insert(dims.end(), config.mlp_hidden.begin(), config.mlp_hidden.end());
  dims.push_back(1);
  mlp_ = cells::Mlp(store_, "value.mlp", dims, rng);
}

cells::ParamId ValueNet::word_table_id() const {
  if (!words_) throw std::logic_error("ValueNet: " + to_string(config_.variant) + " has no word table");
  return *words_;
}

std::size_t ValueNet::fixed_input_dim() const {
  switch (config_.variant) {
    case ValueVariant::full: return config_.visual_dim;
    case ValueVariant::hid: return 0;
    case ValueVariant::hid_im: return config_.policy_hidden;
  }
  return 0;
}

void ValueNet::check_context(bool present) const {
  if (config_.variant != ValueVariant::full && !present)
    throw std::invalid_argument("ValueNet: " + to_string(config_.variant) + " requires the policy context");
}

void ValueNet::check_token(TokenId word) const {
  if (word >= config_.vocab_size)
    throw std::out_of_range("ValueNet: token " + std::to_string(word) + " outside vocabulary");
}

ValueCursor ValueNet::start(std::span<const double> feature) const {
  if (config_.variant != ValueVariant::full) return {};
  return {visual_.forward(store_, feature), lstm_.zero_state()};
}

ValueCursor ValueNet::advance(const ValueCursor& cursor, TokenId word) const {
  if (config_.variant != ValueVariant::full) return cursor;
  check_token(word);
  const auto row = store_.value(*words_).data().subspan(word * config_.hidden, config_.hidden);
  return {cursor.visual, lstm_.step(store_, cursor.lstm, row)};
}

double ValueNet::value(const ValueCursor& cursor, const std::optional<PolicyContext>& context) const {
  check_context(context.has_value());
  Vec input;
  switch (config_.variant) {
    case ValueVariant::full:
      input = cursor.visual;
      input.insert(input.end(), cursor.lstm.h.begin(), cursor.lstm.h.end());
      break;
    case ValueVariant::hid: input.assign(context->hidden.begin(), context->hidden.end()); break;
    case ValueVariant::hid_im:
      input.assign(context->image_input.begin(), context->image_input.end());
      input.insert(input.end(), context->hidden.begin(), context->hidden.end());
      break;
  }
  return std::tanh(mlp_.forward(store_, input)[0]);
}

double ValueNet::evaluate(std::span<const double> feature, std::span<const TokenId> prefix,
                          const std::optional<PolicyContext>& context) const {
  check_context(context.has_value());
  ValueCursor c = start(feature);
  for (TokenId w : prefix) c = advance(c, w);
  return value(c, context);
}

ValueNet::Bound ValueNet::bind(Tape& tape) {
  Bound b;
  if (config_.variant == ValueVariant::full) {
    b.visual = visual_.bind(store_, tape);
    b.words = store_.bind(tape, *words_);
    b.lstm = lstm_.bind(store_, tape);
  }
  b.mlp = mlp_.bind(store_, tape);
  return b;
}

ValueNet::TapedCursor ValueNet::start(Tape& tape, const Bound& p, std::span<const double> feature) const {
  if (config_.variant != ValueVariant::full) return {};
  Var f = tape.constant(num::Tensor::vector(Vec(feature.begin(), feature.end())));
  return {visual_.forward(tape, p.visual, f), lstm_.zero_state(tape)};
}

ValueNet::TapedCursor ValueNet::advance(Tape& tape, const Bound& p, const TapedCursor& cursor, TokenId word) const {
  if (config_.variant != ValueVariant::full) return cursor;
  check_token(word);
  return {cursor.visual, lstm_.step(tape, p.lstm, cursor.lstm, tape.row(*p.words, word))};
}

Var ValueNet::value(Tape& tape, const Bound& p, const TapedCursor& cursor,
                    const std::optional<TapedContext>& context) const {
  check_context(context.has_value());
  Var input{};
  switch (config_.variant) {
    case ValueVariant::full: input = tape.concat(cursor.visual, cursor.lstm.h); break;
    case ValueVariant::hid: input = context->hidden; break;
    case ValueVariant::hid_im: input = tape.concat(context->image_input, context->hidden); break;
  }
  return tape.sum(tape.tanh(mlp_.forward(tape, p.mlp, input)));
}

PolicyTrace trace_policy(const policy::PolicyNet& policy, std::span<const double> feature,
                         std::span<const TokenId> tokens) {
  PolicyTrace out;
  out.image_input = policy.image_input(feature);
  policy::PolicyState s = policy.init_state(feature);
  out.hidden.push_back(s.lstm.h);
  for (TokenId w : tokens) {
    s = policy.advance(s, w);
    out.hidden.push_back(s.lstm.h);
  }
  return out;
}

std::vector<double> prefix_values(const ValueNet& value, const policy::PolicyNet& policy,
                                  std::span<const double> feature, std::span<const TokenId> tokens) {
  std::optional<PolicyTrace> trace;
  if (value.variant() != ValueVariant::full) trace = trace_policy(policy, feature, tokens);
  std::vector<double> out;
  ValueCursor c = value.start(feature);
  for (std::size_t t = 0; t <= tokens.size(); ++t) {
    std::optional<PolicyContext> ctx;
    if (trace) ctx = PolicyContext{trace->hidden[t], trace->image_input};
    out.push_back(value.value(c, ctx));
    if (t < tokens.size()) c = value.advance(c, tokens[t]);
  }
  return out;
}

namespace {

std::uint64_t rollout_stream(std::uint64_t epoch, std::size_t example, std::size_t k) {
  return num::mix64(num::mix64(epoch) ^ (static_cast<std::uint64_t>(example) << 16) ^ k);
}

// Value of the first `len` tokens on a tape, with the policy context frozen.
Var taped_prefix_value(Tape& tape, ValueNet& value, const ValueNet::Bound& p, const policy::PolicyNet& policy,
                       std::span<const double> feature, std::span<const TokenId> prefix) {
  std::optional<ValueNet::TapedContext> ctx;
  if (value.variant() != ValueVariant::full) {
    const PolicyTrace tr = trace_policy(policy, feature, prefix);
    ctx = ValueNet::TapedContext{tape.constant(num::Tensor::vector(tr.hidden.back())),
                                 tape.constant(num::Tensor::vector(tr.image_input))};
  }
  ValueNet::TapedCursor c = value.start(tape, p, feature);
  for (TokenId w : prefix) c = value.advance(tape, p, c, w);
  return value.value(tape, p, c, ctx);
}

}  // namespace

ValuePretrainStats pretrain_value(ValueNet& value, const policy::PolicyNet& policy,
                                  std::span<const world::CaptionedExample> data, const RewardFn& reward,
                                  const ValuePretrainConfig& config) {
  if (data.empty()) throw std::invalid_argument("pretrain_value: empty dataset");
  if (config.batch == 0 || config.rollouts_per_scene == 0)
    throw std::invalid_argument("pretrain_value: batch and rollouts_per_scene must be positive");
  ValuePretrainStats stats;
  num::Rng order_rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  struct Sample {
    std::size_t example;
    Sentence prefix;
    double target;
  };
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.index(i)]);
    std::vector<Sample> samples;
    for (std::size_t idx : order) {
      for (std::size_t k = 0; k < config.rollouts_per_scene; ++k) {
        num::Rng rng = num::Rng::derive(config.seed, rollout_stream(epoch, idx, k));
        const auto ro = policy::rollout(policy, data[idx].feature, rng, config.max_len);
        const double r = reward(data[idx].feature, ro.tokens);
        const std::size_t len = rng.index(ro.tokens.size() + 1);
        samples.push_back({idx, Sentence(ro.tokens.begin(), ro.tokens.begin() + static_cast<long>(len)), r});
        stats.states_per_rollout.push_back(1);
      }
    }
    double sq = 0.0;
    for (std::size_t start = 0; start < samples.size(); start += config.batch) {
      const std::size_t end = std::min(samples.size(), start + config.batch);
      Tape tape;
      auto p = value.bind(tape);
      std::optional<Var> loss;
      for (std::size_t k = start; k < end; ++k) {
        const auto& s = samples[k];
        Var v = taped_prefix_value(tape, value, p, policy, data[s.example].feature, s.prefix);
        Var diff = tape.sub(v, tape.constant(num::Tensor::scalar(s.target)));
        const double d = tape.value(diff).item();
        sq += d * d;
        Var term = tape.scale(tape.mul(diff, diff), 0.5);
        loss = loss ? tape.add(*loss, term) : term;
      }
      tape.backward(tape.scale(*loss, 1.0 / static_cast<double>(end - start)));
      cells::adam_update(value.store(), {.lr = config.lr});
    }
    stats.mse.push_back(sq / static_cast<double>(samples.size()));
  }
  return stats;
}

std::vector<ScoredRollout> sample_scored_rollouts(const policy::PolicyNet& policy,
                                                  std::span<const world::CaptionedExample> data,
                                                  const RewardFn& reward, std::size_t per_scene,
                                                  std::size_t max_len, std::uint64_t seed) {
  std::vector<ScoredRollout> out;
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t k = 0; k < per_scene; ++k) {
      num::Rng rng = num::Rng::derive(seed, rollout_stream(0, i, k));
      auto ro = policy::rollout(policy, data[i].feature, rng, max_len);
      const double r = reward(data[i].feature, ro.tokens);
      out.push_back({i, std::move(ro.tokens), r});
    }
  return out;
}

ValueDiagnostics diagnose_value(const ValueNet& value, const policy::PolicyNet& policy,
                                std::span<const world::CaptionedExample> data,
                                std::span<const ScoredRollout> rollouts) {
  if (rollouts.empty()) throw std::invalid_argument("diagnose_value: no rollouts");
  ValueDiagnostics d;
  std::size_t states = 0;
  std::vector<double> penultimate, rewards;
  for (const auto& ro : rollouts) {
    const auto values = prefix_values(value, policy, data[ro.example].feature, ro.tokens);
    for (double v : values) {
      d.mse += (v - ro.reward) * (v - ro.reward);
      d.zero_mse += ro.reward * ro.reward;
      ++states;
    }
    penultimate.push_back(values[ro.tokens.size() - 1]);
    rewards.push_back(ro.reward);
  }
  d.mse /= static_cast<double>(states);
  d.zero_mse /= static_cast<double>(states);
  d.spearman_penultimate = spearman(penultimate, rewards);
  return d;
}

namespace {

std::vector<double> ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j);
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman: need two equal-length samples");
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace lacap::critic
