#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "lacap/critic/value_net.hpp"
#include "lacap/embedder/embed_model.hpp"
#include "lacap/policy_net/policy.hpp"

namespace lacap::rl {

using num::Tape;
using num::Var;
using world::Sentence;
using world::TokenId;

/// Stage i teacher-forces the first max(T - i*delta, 0) words and trains the
/// remaining min(i*delta, T) words by policy gradient.
struct CurriculumStage {
  std::size_t index = 1;
  std::size_t delta = 2;

  std::size_t rl_words(std::size_t length) const { return std::min(index * delta, length); }
  std::size_t forced_words(std::size_t length) const { return length - rl_words(length); }
  bool fully_rl(std::size_t length) const { return index * delta >= length; }
};

/// Stages needed before every sentence up to `max_len` words is fully RL.
std::size_t stage_count(std::size_t max_len, std::size_t delta);

struct RlConfig {
  double policy_lr = 1e-4;
  double value_lr = 1e-4;
  std::size_t delta = 2;
  std::size_t batch = 32;
  std::size_t max_len = world::kMaxCaptionLength;
  bool value_all_states = true;     // false: one random RL state per sentence
  bool normalize_advantage = false;
  std::size_t epochs_per_stage = 1;
  std::size_t full_rl_epochs = 2;
  /// Cap on curriculum stages; 0 runs no RL at all.
  std::size_t max_stages = static_cast<std::size_t>(-1);
  std::uint64_t seed = 1;
};

struct RlBatchStats {
  double mean_reward = 0.0;
  double mean_advantage = 0.0;
  double policy_grad_norm = 0.0;
  double value_loss = 0.0;  // mean squared error over the trained states
  double rl_fraction = 0.0;
  friend bool operator==(const RlBatchStats&, const RlBatchStats&) = default;
};

/// Policy loss for fixed tokens: cross-entropy on the first `forced` steps
/// and -A_t log p(a_t | s_t) on the rest, advantages held constant.
Var policy_loss(Tape& tape, const policy::PolicyNet& policy, const policy::PolicyNet::Bound& p,
                std::span<const double> feature, std::span<const TokenId> tokens, std::size_t forced,
                std::span<const double> advantages, policy::MaskMode rl_mode = policy::MaskMode::generation);

/// Flat policy gradient of policy_loss for one example.
std::vector<double> policy_gradient(policy::PolicyNet& policy, std::span<const double> feature,
                                    std::span<const TokenId> tokens, std::size_t forced,
                                    std::span<const double> advantages,
                                    policy::MaskMode rl_mode = policy::MaskMode::generation);

/// One joint update on `batch` under `stage`. Rollouts use streams derived
/// from (`seed`, `step`) so the result does not depend on thread count.
RlBatchStats actor_critic_step(policy::PolicyNet& policy, critic::ValueNet& value, const embed::EmbedModel& embed,
                               std::span<const world::CaptionedExample* const> batch, const CurriculumStage& stage,
                               std::uint64_t seed, std::uint64_t step, const RlConfig& config);

struct LogRow {
  std::size_t stage = 0;
  std::size_t epoch = 0;
  double mean_reward = 0.0;
  double value_mse = 0.0;
  double grad_norm = 0.0;
};

struct CurriculumResult {
  std::vector<LogRow> log;
  std::vector<RlBatchStats> steps;
};

/// Called after each stage with its index.
using StageHook = std::function<void(std::size_t stage)>;

/// Curriculum stages 1, 2, ... until every sentence is fully RL, then
/// `full_rl_epochs` more epochs with the last stage.
CurriculumResult run_curriculum(policy::PolicyNet& policy, critic::ValueNet& value, const embed::EmbedModel& embed,
                                std::span<const world::CaptionedExample> train, const RlConfig& config,
                                const StageHook& on_stage = {});

void write_log_csv(const std::filesystem::path& path, std::span<const LogRow> rows);

}  // namespace lacap::rl
