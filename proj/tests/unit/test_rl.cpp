#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "lacap/decode/decoder.hpp"
#include "lacap/rl/actor_critic.hpp"
#include "support/micro_world.hpp"

using namespace lacap;
using policy::MaskMode;
using rl::CurriculumStage;

namespace {

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

struct Toy {
  world::Dataset data;
  policy::PolicyNet policy;
  critic::ValueNet value;
  embed::EmbedModel embed;
};

Toy make_toy(std::size_t n_train) {
  world::DatasetConfig dc;
  dc.n_train = n_train;
  dc.n_val = 1;
  dc.n_test = 1;
  auto d = world::generate_dataset(dc);
  const std::size_t vocab = world::CaptionGrammar().vocab().size();
  policy::PolicyConfig pc;
  pc.vocab_size = vocab;
  critic::ValueConfig vc;
  vc.vocab_size = vocab;
  embed::EmbedConfig ec;
  ec.vocab_size = vocab;
  return {std::move(d), policy::PolicyNet(pc, 1), critic::ValueNet(vc, 2), embed::EmbedModel(ec, 3)};
}

std::vector<const world::CaptionedExample*> pointers(const std::vector<world::CaptionedExample>& v) {
  std::vector<const world::CaptionedExample*> out;
  for (const auto& e : v) out.push_back(&e);
  return out;
}

}  // namespace

TEST_CASE("curriculum split arithmetic") {
  const CurriculumStage s1{1, 2};
  CHECK(s1.forced_words(10) == 8);
  CHECK(s1.rl_words(10) == 2);
  CHECK(rl::stage_count(12, 2) == 6);
  CHECK(rl::stage_count(11, 2) == 6);
  for (std::size_t i = 1; i <= 8; ++i)
    for (std::size_t t = 1; t <= 12; ++t) {
      const CurriculumStage s{i, 2};
      CHECK(s.forced_words(t) + s.rl_words(t) == t);
      CHECK(s.fully_rl(t) == (s.forced_words(t) == 0));
    }
  CHECK(CurriculumStage{6, 2}.fully_rl(12));
  CHECK_FALSE(CurriculumStage{5, 2}.fully_rl(12));
  CHECK_THROWS_AS(rl::stage_count(12, 0), std::invalid_argument);
}

TEST_CASE("zero advantage gives zero policy gradient from sampled steps") {
  policy::PolicyConfig pc;
  pc.vocab_size = 6;
  pc.feature_dim = 3;
  pc.hidden = 4;
  policy::PolicyNet p(pc, 5);
  const std::vector<double> f{0.2, -0.4, 0.9};
  const world::Sentence tokens{3, 4, 0};
  const std::vector<double> zeros(3, 0.0);
  for (double g : rl::policy_gradient(p, f, tokens, 0, zeros)) CHECK(g == 0.0);
  // forced steps still contribute cross-entropy
  CHECK(norm(rl::policy_gradient(p, f, tokens, 1, std::vector<double>(2, 0.0))) > 0.0);
  CHECK_THROWS_AS(rl::policy_gradient(p, f, tokens, 1, zeros), std::invalid_argument);
}

TEST_CASE("micro-world: expected sample gradient equals the exact gradient of J") {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) worst = std::max(worst, testing::micro_world_gradient_error(seed));
  MESSAGE("worst relative error " << worst);
  CHECK(worst < 1e-5);
}

TEST_CASE("parameter isolation: freezing one model leaves the other's update unchanged") {
  auto both = make_toy(16);
  auto policy_frozen = make_toy(16);
  auto value_frozen = make_toy(16);
  rl::RlConfig cfg;
  cfg.policy_lr = 1e-2;
  cfg.value_lr = 1e-2;
  const auto batch = pointers(both.data.train);
  rl::actor_critic_step(both.policy, both.value, both.embed, batch, {2, 2}, 11, 0, cfg);
  auto c1 = cfg;
  c1.policy_lr = 0.0;
  rl::actor_critic_step(policy_frozen.policy, policy_frozen.value, policy_frozen.embed,
                        pointers(policy_frozen.data.train), {2, 2}, 11, 0, c1);
  auto c2 = cfg;
  c2.value_lr = 0.0;
  rl::actor_critic_step(value_frozen.policy, value_frozen.value, value_frozen.embed,
                        pointers(value_frozen.data.train), {2, 2}, 11, 0, c2);

  const auto fresh = make_toy(16);
  for (std::size_t id = 0; id < both.value.store().size(); ++id) {
    CHECK(policy_frozen.value.store().value(id) == both.value.store().value(id));
    CHECK(value_frozen.value.store().value(id) == fresh.value.store().value(id));
  }
  bool policy_moved = false;
  for (std::size_t id = 0; id < both.policy.store().size(); ++id) {
    CHECK(value_frozen.policy.store().value(id) == both.policy.store().value(id));
    CHECK(policy_frozen.policy.store().value(id) == fresh.policy.store().value(id));
    policy_moved |= !(both.policy.store().value(id) == fresh.policy.store().value(id));
  }
  CHECK(policy_moved);
}

TEST_CASE("deterministic replay and the no-RL curriculum") {
  auto a = make_toy(24);
  auto b = make_toy(24);
  rl::RlConfig cfg;
  cfg.batch = 8;
  cfg.max_stages = 2;
  const auto ra = rl::run_curriculum(a.policy, a.value, a.embed, a.data.train, cfg);
  const auto rb = rl::run_curriculum(b.policy, b.value, b.embed, b.data.train, cfg);
  REQUIRE(ra.steps.size() == 6);
  CHECK(ra.steps == rb.steps);
  for (const auto& s : ra.steps) {
    CHECK(std::isfinite(s.mean_reward));
    CHECK(std::isfinite(s.policy_grad_norm));
    CHECK(s.rl_fraction > 0.0);
    CHECK(s.rl_fraction <= 1.0);
  }
  // stage 2 puts a larger share of each sentence under RL than stage 1
  CHECK(ra.steps[4].rl_fraction > ra.steps[0].rl_fraction);

  auto c = make_toy(24);
  const auto fresh = make_toy(24);
  cfg.max_stages = 0;
  std::vector<std::size_t> hooks;
  const auto rc = rl::run_curriculum(c.policy, c.value, c.embed, c.data.train, cfg,
                                     [&](std::size_t s) { hooks.push_back(s); });
  CHECK(rc.steps.empty());
  CHECK(hooks.empty());
  for (std::size_t id = 0; id < c.policy.store().size(); ++id)
    CHECK(c.policy.store().value(id) == fresh.policy.store().value(id));
  for (const auto& ex : c.data.train)
    CHECK(decode::greedy_decode(c.policy, ex.feature) == decode::greedy_decode(fresh.policy, ex.feature));
}

TEST_CASE("full curriculum visits six stages then full-RL epochs, and logs CSV") {
  auto t = make_toy(8);
  rl::RlConfig cfg;
  cfg.batch = 8;
  cfg.full_rl_epochs = 1;
  std::vector<std::size_t> hooks;
  const auto r = rl::run_curriculum(t.policy, t.value, t.embed, t.data.train, cfg,
                                    [&](std::size_t s) { hooks.push_back(s); });
  CHECK(hooks == std::vector<std::size_t>{1, 2, 3, 4, 5, 6, 7});
  REQUIRE(r.log.size() == 7);
  CHECK(r.steps.back().rl_fraction == 1.0);
  const auto path = std::filesystem::temp_directory_path() / "lacap_rl_log.csv";
  rl::write_log_csv(path, r.log);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "stage,epoch,mean_reward,value_mse,grad_norm");
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 7);
  std::filesystem::remove(path);
}

TEST_CASE("stage with no RL span is rejected") {
  auto t = make_toy(4);
  CHECK_THROWS_AS(rl::actor_critic_step(t.policy, t.value, t.embed, pointers(t.data.train), {0, 2}, 1, 0, {}),
                  std::invalid_argument);
}

TEST_CASE("a fitted baseline reduces the variance of per-example gradient norms") {
  auto t = make_toy(256);
  const auto reward = [&](std::span<const double> f, std::span<const world::TokenId> s) {
    return t.embed.reward(f, s);
  };
  critic::ValuePretrainConfig vc;
  vc.epochs = 4;
  vc.lr = 3e-3;
  critic::pretrain_value(t.value, t.policy, t.data.train, reward, vc);

  const auto rollouts = critic::sample_scored_rollouts(t.policy, t.data.train, reward, 1, 12, 5);
  REQUIRE(rollouts.size() == 256);
  std::vector<double> with, without;
  for (const auto& ro : rollouts) {
    const auto& f = t.data.train[ro.example].feature;
    const auto values = critic::prefix_values(t.value, t.policy, f, ro.tokens);
    std::vector<double> adv, raw(ro.tokens.size(), ro.reward);
    for (std::size_t k = 0; k < ro.tokens.size(); ++k) adv.push_back(ro.reward - values[k]);
    with.push_back(norm(rl::policy_gradient(t.policy, f, ro.tokens, 0, adv)));
    without.push_back(norm(rl::policy_gradient(t.policy, f, ro.tokens, 0, raw)));
  }
  const auto variance = [](const std::vector<double>& x) {
    double m = 0.0, v = 0.0;
    for (double a : x) m += a;
    m /= static_cast<double>(x.size());
    for (double a : x) v += (a - m) * (a - m);
    return v / static_cast<double>(x.size() - 1);
  };
  MESSAGE("variance with baseline " << variance(with) << ", without " << variance(without));
  CHECK(variance(with) < variance(without));
}
