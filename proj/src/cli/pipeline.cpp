#include "lacap/cli/pipeline.hpp"

namespace lacap::app {

namespace {
constexpr std::size_t kDiagnosticRollouts = 4;  // per validation scene
}  // namespace

const world::Vocab& grammar_vocab() {
  static const world::CaptionGrammar grammar;
  return grammar.vocab();
}

world::Dataset generate_data(const RunConfig& config) { return world::generate_dataset(dataset_config(config)); }

critic::RewardFn reward_fn(const embed::EmbedModel& embed) {
  return [&embed](std::span<const double> f, std::span<const world::TokenId> s) { return embed.reward(f, s); };
}

EmbedStage train_embed_stage(const RunConfig& config, const world::Dataset& data) {
  EmbedStage st{embed::EmbedModel(embed_config(config, grammar_vocab().size()), seed_for(config, SeedUse::embed_init)),
                {}, 0.0, 0.0};
  st.loss_curve = embed::train_embedding(
      st.model, data.train,
      {config.embed.epochs, config.embed.lr, config.embed.batch, seed_for(config, SeedUse::embed_train)});
  if (data.val.size() >= 2) st.heldout_loss = embed::heldout_ranking_loss(st.model, data.val, config.embed.batch);
  st.recall_at_1 = embed::recall_at_1(st.model, data.test);
  return st;
}

PolicyStage pretrain_policy_stage(const RunConfig& config, const world::Dataset& data) {
  PolicyStage st{policy::PolicyNet(policy_config(config, grammar_vocab().size()),
                                   seed_for(config, SeedUse::policy_init)),
                 {}, 0.0};
  st.nll_curve = policy::pretrain_policy(
      st.model, data.train,
      {config.policy.epochs, config.policy.lr, config.policy.batch, seed_for(config, SeedUse::policy_train)});
  if (!data.val.empty()) st.val_nll = policy::mean_nll(st.model, data.val);
  return st;
}

ValueStage pretrain_value_stage(const RunConfig& config, const world::Dataset& data, const policy::PolicyNet& policy,
                                const embed::EmbedModel& embed, critic::ValueVariant variant) {
  const auto variant_seed = static_cast<std::uint64_t>(variant);
  ValueStage st{critic::ValueNet(value_config(config, grammar_vocab().size(), variant),
                                 seed_for(config, SeedUse::value_init) + variant_seed),
                {}, {}};
  critic::ValuePretrainConfig vc;
  vc.epochs = config.value.epochs;
  vc.lr = config.value.lr;
  vc.batch = config.value.batch;
  vc.rollouts_per_scene = config.value_rollouts_per_scene;
  vc.max_len = config.decode.max_len;
  vc.seed = seed_for(config, SeedUse::value_train) + variant_seed;
  const auto reward = reward_fn(embed);
  st.mse_curve = critic::pretrain_value(st.model, policy, data.train, reward, vc).mse;
  if (!data.val.empty()) {
    const auto rollouts = critic::sample_scored_rollouts(policy, data.val, reward, kDiagnosticRollouts, config.decode.max_len,
                                                         seed_for(config, SeedUse::diagnostics));
    st.diagnostics = critic::diagnose_value(st.model, policy, data.val, rollouts);
  }
  return st;
}

RlStage train_rl_stage(const RunConfig& config, const world::Dataset& data, const policy::PolicyNet& policy,
                       const critic::ValueNet& value, const embed::EmbedModel& embed, const rl::StageHook& on_stage) {
  RlStage st{policy, value, {}};
  rl::RlConfig rc = config.rl;
  rc.max_len = config.decode.max_len;
  rc.seed = seed_for(config, SeedUse::rl);
  st.curriculum = rl::run_curriculum(st.policy, st.value, embed, data.train, rc, on_stage);
  return st;
}

}  // namespace lacap::app
