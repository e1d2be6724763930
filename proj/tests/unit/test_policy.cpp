#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "lacap/cells/gradcheck.hpp"
#include "lacap/decode/decoder.hpp"
#include "lacap/policy_net/policy.hpp"

using namespace lacap;
using policy::MaskMode;
using policy::PolicyConfig;
using policy::PolicyNet;
using num::Tape;

namespace {

PolicyConfig tiny(std::size_t vocab = 7) {
  PolicyConfig c;
  c.vocab_size = vocab;
  c.feature_dim = 5;
  c.hidden = 4;
  return c;
}

std::vector<double> feature(std::uint64_t seed, std::size_t dim = 5) {
  num::Rng rng(seed);
  std::vector<double> f(dim);
  for (auto& x : f) x = rng.uniform(-1, 1);
  return f;
}

void zero_param(cells::ParamStore& store, const std::string& name) { store.mutable_value(store.find(name)).fill(0.0); }

}  // namespace

TEST_CASE("action masks") {
  const auto l = policy::action_mask(6, MaskMode::likelihood);
  const auto g = policy::action_mask(6, MaskMode::generation);
  CHECK(l == std::vector<unsigned char>{1, 1, 0, 1, 1, 1});
  CHECK(g == std::vector<unsigned char>{1, 0, 0, 1, 1, 1});
  CHECK(policy::action_mask(3, MaskMode::none) == std::vector<unsigned char>{1, 1, 1});
}

TEST_CASE("init_state: zero weights give zero hidden state; deterministic; dimension checked") {
  PolicyNet p(tiny(), 1);
  for (std::size_t id = 0; id < p.store().size(); ++id) p.store().mutable_value(id).fill(0.0);
  const auto s = p.init_state(feature(3));
  for (double h : s.lstm.h) CHECK(h == 0.0);
  CHECK(s.t == 0);

  PolicyNet q(tiny(), 2);
  const auto a = q.init_state(feature(3));
  const auto b = q.init_state(feature(3));
  CHECK(a.lstm.h == b.lstm.h);
  CHECK(a.lstm.c == b.lstm.c);
  CHECK_THROWS_AS(q.init_state(feature(3, 4)), num::ShapeError);
}

TEST_CASE("step: simplex output, uniform head, invalid token") {
  PolicyNet p(tiny(), 4);
  auto s = p.init_state(feature(1));
  auto [s1, lp] = p.step(s, 3);
  CHECK(s1.t == 1);
  double z = 0.0;
  for (double x : lp) z += std::exp(x);
  CHECK(std::abs(z - 1.0) < 1e-12);
  CHECK(std::exp(lp[world::Vocab::kPad]) == 0.0);
  CHECK_THROWS_AS(p.step(s, 7), std::out_of_range);

  zero_param(p.store(), "policy.out.w");
  zero_param(p.store(), "policy.out.b");
  const auto uniform = p.log_probs(s1);
  for (std::size_t w = 0; w < uniform.size(); ++w)
    if (w != world::Vocab::kPad) CHECK(uniform[w] == doctest::Approx(-std::log(6.0)).epsilon(1e-14));
  const auto gen = p.log_probs(s1, MaskMode::generation);
  CHECK(gen[3] == doctest::Approx(-std::log(5.0)).epsilon(1e-14));

  const world::Sentence sent{3, 4, 5, 0};
  CHECK(p.sequence_logprob(feature(1), sent) == doctest::Approx(-4.0 * std::log(6.0)).epsilon(1e-14));
}

TEST_CASE("stepwise log-probs sum to the sequence log-probability") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    PolicyNet p(tiny(), seed);
    num::Rng rng(seed);
    world::Sentence sent;
    for (int k = 0; k < 5; ++k) sent.push_back(static_cast<world::TokenId>(3 + rng.index(4)));
    sent.push_back(0);
    const auto f = feature(seed + 50);
    auto s = p.init_state(f);
    double total = p.log_probs(s)[sent[0]];
    for (std::size_t t = 1; t < sent.size(); ++t) {
      auto [next, lp] = p.step(s, sent[t - 1]);
      total += lp[sent[t]];
      s = next;
    }
    const double whole = p.sequence_logprob(f, sent);
    CHECK(whole == total);
    CHECK(whole <= 0.0);

    Tape tape;
    auto b = p.bind(tape);
    CHECK(-tape.value(p.sequence_nll(tape, b, f, sent)).item() == whole);
  }
  PolicyNet p(tiny(), 0);
  CHECK_THROWS_AS(p.sequence_logprob(feature(0), world::Sentence{}), std::invalid_argument);
}

TEST_CASE("step is Markov in the state") {
  PolicyNet p(tiny(), 9);
  const auto f = feature(2);
  auto a = p.advance(p.advance(p.init_state(f), 3), 4);
  auto b = p.advance(p.advance(p.init_state(f), 3), 4);
  for (int k = 0; k < 3; ++k) {
    auto [na, la] = p.step(a, 5);
    auto [nb, lb] = p.step(b, 5);
    CHECK(la == lb);
    a = na;
    b = nb;
  }
}

TEST_CASE("cross-entropy gradient matches finite differences on 2-example batches") {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    PolicyNet p(tiny(), seed);
    const auto f0 = feature(seed + 1), f1 = feature(seed + 2);
    const world::Sentence s0{3, 5, 0}, s1{4, 4, 6, 0};
    auto r = cells::gradcheck(p.store(), [&](Tape& t, cells::ParamStore&) {
      auto b = p.bind(t);
      return t.scale(t.add(p.sequence_nll(t, b, f0, s0), p.sequence_nll(t, b, f1, s1)), 0.5);
    });
    worst = std::max(worst, r.rel_error);
  }
  MESSAGE("worst relative error " << worst);
  CHECK(worst < 1e-6);
}

TEST_CASE("rollout: forced prefix, determinism, masking") {
  PolicyNet p(tiny(), 3);
  const auto f = feature(4);
  const world::Sentence ref{3, 4, 5, 0};
  num::Rng r0(1);
  const auto full = policy::rollout(p, f, r0, 12, ref);
  CHECK(full.tokens == ref);
  CHECK(full.forced == 4);
  CHECK(full.logps.size() == 4);

  num::Rng a(77), b(77);
  const auto ra = policy::rollout(p, f, a, 12, std::span(ref).first(2));
  const auto rb = policy::rollout(p, f, b, 12, std::span(ref).first(2));
  CHECK(ra.tokens == rb.tokens);
  CHECK(ra.logps == rb.logps);
  CHECK(ra.forced == 2);

  num::Rng rng(5);
  for (int k = 0; k < 300; ++k) {
    const auto ro = policy::rollout(p, f, rng, 6);
    CHECK(ro.tokens.size() <= 6);
    CHECK(ro.tokens.size() >= 1);
    for (std::size_t t = 0; t + 1 < ro.tokens.size(); ++t) CHECK(ro.tokens[t] != world::Vocab::kEos);
    for (auto w : ro.tokens) {
      CHECK(w != world::Vocab::kPad);
      CHECK(w != world::Vocab::kUnk);
    }
  }
  CHECK_THROWS_AS(policy::rollout(p, f, rng, 0), std::invalid_argument);
}

TEST_CASE("rollout first-word frequencies match the policy within 3 sigma") {
  PolicyNet p(tiny(5), 12);
  const auto f = feature(8);
  const auto lp = p.log_probs(p.init_state(f), MaskMode::generation);
  std::vector<std::size_t> counts(5, 0);
  num::Rng rng(2024);
  const std::size_t n = 100000;
  for (std::size_t k = 0; k < n; ++k) ++counts[policy::rollout(p, f, rng, 1).tokens[0]];
  for (std::size_t w = 0; w < 5; ++w) {
    const double prob = std::exp(lp[w]);
    const double sigma = std::sqrt(n * prob * (1 - prob));
    CHECK(std::abs(static_cast<double>(counts[w]) - n * prob) <= 3 * sigma + 1e-9);
  }
}

TEST_CASE("pretraining: loss falls, zero lr is identity, 10 examples are memorized") {
  world::DatasetConfig dc;
  dc.n_train = 60;
  dc.n_val = 1;
  dc.n_test = 1;
  const auto d = world::generate_dataset(dc);
  const std::size_t vocab = world::CaptionGrammar().vocab().size();

  PolicyConfig cfg;
  cfg.vocab_size = vocab;
  PolicyNet frozen(cfg, 1);
  const auto before = frozen.store().entries();
  policy::PretrainConfig zero;
  zero.epochs = 1;
  zero.lr = 0.0;
  policy::pretrain_policy(frozen, d.train, zero);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(frozen.store().entries()[i].value == before[i].value);

  PolicyNet p(cfg, 1);
  const double initial = policy::mean_nll(p, d.train);
  policy::PretrainConfig one;
  one.epochs = 1;
  policy::pretrain_policy(p, d.train, one);
  CHECK(policy::mean_nll(p, d.train) < initial);

  // one reference per scene so the target is unambiguous
  std::vector<world::CaptionedExample> ten(d.train.begin(), d.train.begin() + 10);
  for (auto& ex : ten) ex.references.resize(1);
  PolicyNet m(cfg, 3);
  policy::PretrainConfig mem;
  mem.epochs = 200;
  mem.lr = 1e-2;
  mem.batch = 10;
  const auto curve = policy::pretrain_policy(m, ten, mem);
  std::size_t exact = 0;
  for (const auto& ex : ten) exact += decode::greedy_decode(m, ex.feature) == ex.references.front();
  MESSAGE("memorized " << exact << "/10, final loss " << curve.back());
  CHECK(exact >= 9);
}
