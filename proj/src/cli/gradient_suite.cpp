#include "lacap/cli/gradient_suite.hpp"

#include <algorithm>
#include <functional>
#include <optional>

#include "lacap/cells/gradcheck.hpp"
#include "lacap/cells/layers.hpp"
#include "lacap/critic/value_net.hpp"
#include "lacap/embedder/embed_model.hpp"
#include "lacap/policy_net/policy.hpp"
#include "lacap/rl/actor_critic.hpp"

namespace lacap::app {

namespace {

using num::Tape;
using num::Var;

constexpr std::size_t kVocab = 7;
constexpr std::size_t kFeature = 5;

std::vector<double> random_vector(num::Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1, 1);
  return v;
}

world::Sentence random_sentence(num::Rng& rng, std::size_t max_len) {
  world::Sentence s(1 + rng.index(max_len));
  for (auto& w : s) w = static_cast<world::TokenId>(3 + rng.index(kVocab - 3));
  s.back() = world::Vocab::kEos;
  return s;
}

policy::PolicyConfig small_policy() { return {kVocab, kFeature, 4}; }

double cells_check(std::uint64_t seed) {
  num::Rng rng(seed);
  cells::ParamStore s;
  cells::LstmCell lstm(s, "lstm", 3, 4, rng);
  cells::GruCell gru(s, "gru", 3, 4, rng);
  cells::Mlp mlp(s, "mlp", {8, 5, 1}, rng);
  for (std::size_t id = 0; id < s.size(); ++id)
    if (s.entry(id).name.ends_with(".b"))
      for (auto& b : s.mutable_value(id).data()) b += rng.uniform(-0.1, 0.1);
  std::vector<num::Tensor> xs;
  for (std::size_t t = 0, n = 1 + seed % 5; t < n; ++t) xs.push_back(num::Tensor::vector(random_vector(rng, 3)));
  return cells::gradcheck(s, [&](Tape& t, cells::ParamStore& st) {
           auto lp = lstm.bind(st, t);
           auto gp = gru.bind(st, t);
           auto mp = mlp.bind(st, t);
           auto ls = lstm.zero_state(t);
           Var gh = gru.zero_state(t);
           for (const auto& x : xs) {
             Var xv = t.constant(x);
             ls = lstm.step(t, lp, ls, xv);
             gh = gru.step(t, gp, gh, xv);
           }
           return t.sum(t.tanh(mlp.forward(t, mp, t.concat(ls.h, gh))));
         })
      .rel_error;
}

double policy_xent_check(std::uint64_t seed) {
  policy::PolicyNet p(small_policy(), seed);
  num::Rng rng(seed + 1000);
  const auto f0 = random_vector(rng, kFeature), f1 = random_vector(rng, kFeature);
  const auto s0 = random_sentence(rng, 5), s1 = random_sentence(rng, 5);
  return cells::gradcheck(p.store(), [&](Tape& t, cells::ParamStore&) {
           auto b = p.bind(t);
           return t.scale(t.add(p.sequence_nll(t, b, f0, s0), p.sequence_nll(t, b, f1, s1)), 0.5);
         })
      .rel_error;
}

double policy_rl_check(std::uint64_t seed) {
  policy::PolicyNet p(small_policy(), seed);
  num::Rng rng(seed + 2000);
  const auto f = random_vector(rng, kFeature);
  const auto s = random_sentence(rng, 6);
  const std::size_t forced = rng.index(s.size());
  const auto adv = random_vector(rng, s.size() - forced);
  return cells::gradcheck(p.store(), [&](Tape& t, cells::ParamStore&) {
           auto b = p.bind(t);
           return rl::policy_loss(t, p, b, f, s, forced, adv);
         })
      .rel_error;
}

double value_check(critic::ValueVariant variant, std::uint64_t seed) {
  const policy::PolicyNet p(small_policy(), seed + 1);
  critic::ValueConfig vc;
  vc.variant = variant;
  vc.vocab_size = kVocab;
  vc.feature_dim = kFeature;
  vc.visual_dim = 3;
  vc.hidden = 4;
  vc.policy_hidden = 4;
  vc.mlp_hidden = {6, 5};
  critic::ValueNet v(vc, seed);
  num::Rng rng(seed + 3000);
  // keeps pre-activations off the ReLU kink when a whole layer is inactive
  for (std::size_t id = 0; id < v.store().size(); ++id)
    if (v.store().entry(id).name.ends_with(".b"))
      for (auto& b : v.store().mutable_value(id).data()) b += rng.uniform(-0.1, 0.1);
  const auto f = random_vector(rng, kFeature);
  world::Sentence prefix(rng.index(5));
  for (auto& w : prefix) w = static_cast<world::TokenId>(rng.index(kVocab));
  const double target = rng.uniform(-1, 1);
  const auto trace = critic::trace_policy(p, f, prefix);
  return cells::gradcheck(v.store(), [&](Tape& t, cells::ParamStore&) {
           auto b = v.bind(t);
           auto c = v.start(t, b, f);
           for (auto w : prefix) c = v.advance(t, b, c, w);
           std::optional<critic::ValueNet::TapedContext> ctx;
           if (variant != critic::ValueVariant::full)
             ctx = critic::ValueNet::TapedContext{t.constant(num::Tensor::vector(trace.hidden.back())),
                                                  t.constant(num::Tensor::vector(trace.image_input))};
           auto d = t.sub(v.value(t, b, c, ctx), t.constant(num::Tensor::scalar(target)));
           return t.scale(t.mul(d, d), 0.5);
         })
      .rel_error;
}

double embed_check(std::uint64_t seed) {
  embed::EmbedConfig cfg{8, 6, 4, 5, 5.0};  // a wide margin keeps every hinge active
  embed::EmbedModel m(cfg, seed);
  // checked at trained-scale magnitudes, away from the curvature of
  // normalizing near-zero vectors
  for (std::size_t id = 0; id < m.store().size(); ++id)
    for (auto& w : m.store().mutable_value(id).data()) w *= 6.0;
  num::Rng rng(seed + 4000);
  std::vector<world::Feature> feats(3);
  std::vector<world::Sentence> sents(3);
  std::vector<embed::EmbedPair> batch;
  for (std::size_t i = 0; i < 3; ++i) {
    feats[i] = random_vector(rng, 6);
    sents[i].resize(1 + rng.index(4));
    for (auto& w : sents[i]) w = static_cast<world::TokenId>(rng.index(8));
  }
  for (std::size_t i = 0; i < 3; ++i) batch.push_back({&feats[i], &sents[i], i});
  return cells::gradcheck(m.store(), [&](Tape& t, cells::ParamStore&) {
           auto p = m.bind(t);
           return embed::ranking_loss(t, m, p, batch);
         })
      .rel_error;
}

}  // namespace

std::vector<GradientSuiteResult> run_gradient_suites(std::size_t seeds, std::uint64_t first_seed) {
  const std::vector<std::pair<std::string, std::function<double(std::uint64_t)>>> suites{
      {"cells (lstm, gru, mlp)", cells_check},
      {"policy cross-entropy", policy_xent_check},
      {"policy gradient loss", policy_rl_check},
      {"value mse (full)", [](std::uint64_t s) { return value_check(critic::ValueVariant::full, s); }},
      {"value mse (hid-VN)", [](std::uint64_t s) { return value_check(critic::ValueVariant::hid, s); }},
      {"value mse (hid-Im-VN)", [](std::uint64_t s) { return value_check(critic::ValueVariant::hid_im, s); }},
      {"embedding ranking loss", embed_check},
  };
  std::vector<GradientSuiteResult> out;
  for (const auto& [name, check] : suites) {
    GradientSuiteResult r{name, 0.0, 0};
    for (std::uint64_t s = first_seed; s < first_seed + seeds; ++s) {
      r.max_rel_error = std::max(r.max_rel_error, check(s));
      ++r.checks;
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace lacap::app
