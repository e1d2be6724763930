#pragma once

#include <vector>

#include "lacap/cli/config.hpp"
#include "lacap/critic/value_net.hpp"
#include "lacap/embedder/embed_model.hpp"
#include "lacap/policy_net/policy.hpp"
#include "lacap/rl/actor_critic.hpp"
#include "lacap/sceneworld/world.hpp"

namespace lacap::app {

/// Vocabulary fixed by the caption grammar.
const world::Vocab& grammar_vocab();

world::Dataset generate_data(const RunConfig& config);

struct EmbedStage {
  embed::EmbedModel model;
  std::vector<double> loss_curve;
  double heldout_loss = 0.0;
  double recall_at_1 = 0.0;  // on the test split
};
EmbedStage train_embed_stage(const RunConfig& config, const world::Dataset& data);

struct PolicyStage {
  policy::PolicyNet model;
  std::vector<double> nll_curve;
  double val_nll = 0.0;
};
PolicyStage pretrain_policy_stage(const RunConfig& config, const world::Dataset& data);

struct ValueStage {
  critic::ValueNet model;
  std::vector<double> mse_curve;
  critic::ValueDiagnostics diagnostics;  // on the validation split
};
ValueStage pretrain_value_stage(const RunConfig& config, const world::Dataset& data, const policy::PolicyNet& policy,
                                const embed::EmbedModel& embed, critic::ValueVariant variant);

struct RlStage {
  policy::PolicyNet policy;
  critic::ValueNet value;
  rl::CurriculumResult curriculum;
};
/// Starts from copies of the pretrained policy and value networks.
RlStage train_rl_stage(const RunConfig& config, const world::Dataset& data, const policy::PolicyNet& policy,
                       const critic::ValueNet& value, const embed::EmbedModel& embed,
                       const rl::StageHook& on_stage = {});

critic::RewardFn reward_fn(const embed::EmbedModel& embed);

}  // namespace lacap::app
