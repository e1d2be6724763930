#include "lacap/rl/actor_critic.hpp"

#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <optional>
#include <stdexcept>

namespace lacap::rl {

std::size_t stage_count(std::size_t max_len, std::size_t delta) {
  if (delta == 0) throw std::invalid_argument("stage_count: delta must be positive");
  return (max_len + delta - 1) / delta;
}

Var policy_loss(Tape& tape, const policy::PolicyNet& policy, const policy::PolicyNet::Bound& p,
                std::span<const double> feature, std::span<const TokenId> tokens, std::size_t forced,
                std::span<const double> advantages, policy::MaskMode rl_mode) {
  if (tokens.empty()) throw std::invalid_argument("policy_loss: empty sentence");
  if (forced > tokens.size() || advantages.size() != tokens.size() - forced)
    throw std::invalid_argument("policy_loss: need one advantage per sampled step");
  auto s = policy.init_state(tape, p, feature);
  std::optional<Var> total;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    Var logits = policy.logits(tape, p, s);
    Var term = t < forced ? tape.softmax_xent(logits, tokens[t], policy.mask(policy::MaskMode::likelihood)).loss
                          : tape.scale(tape.softmax_xent(logits, tokens[t], policy.mask(rl_mode)).loss,
                                       advantages[t - forced]);
    total = total ? tape.add(*total, term) : term;
    if (t + 1 < tokens.size()) s = policy.advance(tape, p, s, tokens[t]);
  }
  return *total;
}

std::vector<double> policy_gradient(policy::PolicyNet& policy, std::span<const double> feature,
                                    std::span<const TokenId> tokens, std::size_t forced,
                                    std::span<const double> advantages, policy::MaskMode rl_mode) {
  policy.store().zero_grad();
  {
    Tape tape;
    auto p = policy.bind(tape);
    tape.backward(policy_loss(tape, policy, p, feature, tokens, forced, advantages, rl_mode));
  }
  auto g = policy.store().flat_grad();
  policy.store().zero_grad();
  return g;
}

namespace {

struct Sampled {
  Sentence tokens;
  std::size_t forced = 0;
  double reward = 0.0;
  std::uint64_t stream = 0;
};

std::uint64_t example_stream(std::uint64_t step, std::size_t k) { return num::mix64(step) ^ k; }

}  // namespace

RlBatchStats actor_critic_step(policy::PolicyNet& policy, critic::ValueNet& value, const embed::EmbedModel& embed,
                               std::span<const world::CaptionedExample* const> batch, const CurriculumStage& stage,
                               std::uint64_t seed, std::uint64_t step, const RlConfig& config) {
  if (batch.empty()) throw std::invalid_argument("actor_critic_step: empty batch");
  if (stage.index == 0 || stage.delta == 0)
    throw std::invalid_argument("actor_critic_step: stage has no RL span (index and delta must be positive)");

  const std::size_t n = batch.size();
  std::vector<Sampled> work(n);
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (long k = 0; k < static_cast<long>(n); ++k) {
    try {
      const auto& ex = *batch[k];
      const std::uint64_t stream = example_stream(step, static_cast<std::size_t>(k));
      num::Rng rng = num::Rng::derive(seed, stream);
      const Sentence& ref = ex.references.at(rng.index(ex.references.size()));
      const std::size_t forced = stage.forced_words(ref.size());
      auto ro = policy::rollout(policy, ex.feature, rng, config.max_len, std::span(ref).first(forced));
      const double r = embed.reward(ex.feature, ro.tokens);
      work[k] = {std::move(ro.tokens), forced, r, stream};
    } catch (...) {
#pragma omp critical(lacap_rl_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  // Values of every RL state s_t (the prefix before action t).
  Tape vtape;
  auto vb = value.bind(vtape);
  std::vector<std::vector<double>> advantages(n);
  std::vector<std::vector<Var>> value_vars(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& w = work[k];
    const auto& feature = batch[k]->feature;
    std::optional<critic::PolicyTrace> trace;
    if (value.variant() != critic::ValueVariant::full) trace = critic::trace_policy(policy, feature, w.tokens);
    auto cur = value.start(vtape, vb, feature);
    for (std::size_t t = 0; t < w.tokens.size(); ++t) {
      if (t >= w.forced) {
        std::optional<critic::ValueNet::TapedContext> ctx;
        if (trace)
          ctx = critic::ValueNet::TapedContext{vtape.constant(num::Tensor::vector(trace->hidden[t])),
                                               vtape.constant(num::Tensor::vector(trace->image_input))};
        Var v = value.value(vtape, vb, cur, ctx);
        value_vars[k].push_back(v);
        advantages[k].push_back(w.reward - vtape.value(v).item());
      }
      if (t + 1 < w.tokens.size()) cur = value.advance(vtape, vb, cur, w.tokens[t]);
    }
  }

  RlBatchStats stats;
  std::size_t rl_steps = 0, all_steps = 0;
  for (std::size_t k = 0; k < n; ++k) {
    stats.mean_reward += work[k].reward;
    for (double a : advantages[k]) stats.mean_advantage += a;
    rl_steps += advantages[k].size();
    all_steps += work[k].tokens.size();
  }
  stats.mean_reward /= static_cast<double>(n);
  stats.mean_advantage /= static_cast<double>(std::max<std::size_t>(rl_steps, 1));
  stats.rl_fraction = static_cast<double>(rl_steps) / static_cast<double>(all_steps);

  if (config.normalize_advantage && rl_steps > 1) {
    double var = 0.0;
    for (const auto& a : advantages)
      for (double x : a) var += (x - stats.mean_advantage) * (x - stats.mean_advantage);
    const double sd = std::sqrt(var / static_cast<double>(rl_steps)) + 1e-8;
    for (auto& a : advantages)
      for (double& x : a) x = (x - stats.mean_advantage) / sd;
  }

  // Value regression toward the shared terminal reward.
  std::optional<Var> vloss;
  std::size_t trained = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& vars = value_vars[k];
    if (vars.empty()) continue;
    std::vector<std::size_t> picks(vars.size());
    std::iota(picks.begin(), picks.end(), 0);
    if (!config.value_all_states) {
      num::Rng rng = num::Rng::derive(seed ^ 0x5eedULL, work[k].stream);
      picks = {rng.index(vars.size())};
    }
    for (std::size_t i : picks) {
      Var d = vtape.sub(vars[i], vtape.constant(num::Tensor::scalar(work[k].reward)));
      const double dv = vtape.value(d).item();
      stats.value_loss += dv * dv;
      ++trained;
      Var term = vtape.scale(vtape.mul(d, d), 0.5);
      vloss = vloss ? vtape.add(*vloss, term) : term;
    }
  }
  stats.value_loss /= static_cast<double>(std::max<std::size_t>(trained, 1));

  Tape ptape;
  auto pb = policy.bind(ptape);
  std::optional<Var> ploss;
  for (std::size_t k = 0; k < n; ++k) {
    Var l = policy_loss(ptape, policy, pb, batch[k]->feature, work[k].tokens, work[k].forced, advantages[k]);
    ploss = ploss ? ptape.add(*ploss, l) : l;
  }
  const double inv = 1.0 / static_cast<double>(n);
  ptape.backward(ptape.scale(*ploss, inv));
  stats.policy_grad_norm = policy.store().grad_norm();
  cells::adam_update(policy.store(), {.lr = config.policy_lr});

  if (vloss) {
    vtape.backward(vtape.scale(*vloss, inv));
  } else {
    value.store().mark_grads();
  }
  cells::adam_update(value.store(), {.lr = config.value_lr});
  return stats;
}

CurriculumResult run_curriculum(policy::PolicyNet& policy, critic::ValueNet& value, const embed::EmbedModel& embed,
                                std::span<const world::CaptionedExample> train, const RlConfig& config,
                                const StageHook& on_stage) {
  if (train.empty()) throw std::invalid_argument("run_curriculum: empty training set");
  if (config.batch == 0) throw std::invalid_argument("run_curriculum: batch must be positive");
  CurriculumResult result;
  const std::size_t stages = std::min(stage_count(config.max_len, config.delta), config.max_stages);
  num::Rng order_rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::uint64_t step = 0;

  const auto run_epoch = [&](std::size_t stage_index, std::size_t epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.index(i)]);
    LogRow row{stage_index, epoch, 0.0, 0.0, 0.0};
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      std::vector<const world::CaptionedExample*> batch;
      for (std::size_t k = start; k < end; ++k) batch.push_back(&train[order[k]]);
      const auto s = actor_critic_step(policy, value, embed, batch, {stage_index, config.delta}, config.seed,
                                       step++, config);
      result.steps.push_back(s);
      row.mean_reward += s.mean_reward;
      row.value_mse += s.value_loss;
      row.grad_norm += s.policy_grad_norm;
      ++batches;
    }
    row.mean_reward /= static_cast<double>(batches);
    row.value_mse /= static_cast<double>(batches);
    row.grad_norm /= static_cast<double>(batches);
    result.log.push_back(row);
  };

  std::size_t epoch = 0;
  for (std::size_t i = 1; i <= stages; ++i) {
    for (std::size_t e = 0; e < config.epochs_per_stage; ++e) run_epoch(i, epoch++);
    if (on_stage) on_stage(i);
  }
  if (stages > 0 && stages == stage_count(config.max_len, config.delta)) {
    for (std::size_t e = 0; e < config.full_rl_epochs; ++e) run_epoch(stages, epoch++);
    if (on_stage && config.full_rl_epochs > 0) on_stage(stages + 1);
  }
  return result;
}

void write_log_csv(const std::filesystem::path& path, std::span<const LogRow> rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "stage,epoch,mean_reward,value_mse,grad_norm\n";
  for (const auto& r : rows)
    out << r.stage << ',' << r.epoch << ',' << r.mean_reward << ',' << r.value_mse << ',' << r.grad_norm << '\n';
}

}  // namespace lacap::rl
