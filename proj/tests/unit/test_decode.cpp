#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "lacap/decode/decoder.hpp"
#include "support/table_world.hpp"

using namespace lacap;
using decode::BeamConfig;
using decode::Hypothesis;
using world::Sentence;
using world::TokenId;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using testing::TableScorer;
using testing::path_score;
using testing::brute_force_beams;

struct Models {
  policy::PolicyNet policy;
  critic::ValueNet value;
};

Models make_models(std::uint64_t seed, critic::ValueVariant variant = critic::ValueVariant::full) {
  policy::PolicyConfig pc;
  pc.vocab_size = 12;
  pc.feature_dim = 6;
  pc.hidden = 8;
  critic::ValueConfig vc;
  vc.variant = variant;
  vc.vocab_size = 12;
  vc.feature_dim = 6;
  vc.visual_dim = 5;
  vc.hidden = 8;
  vc.policy_hidden = 8;
  vc.mlp_hidden = {10, 6};
  Models m{policy::PolicyNet(pc, seed), critic::ValueNet(vc, seed + 1)};
  // sharpen the output layer so sentences end within the length cap
  for (auto& w : m.policy.store().mutable_value(m.policy.store().find("policy.out.w")).data()) w *= 40.0;
  auto& b = m.policy.store().mutable_value(m.policy.store().find("policy.out.b"));
  b[world::Vocab::kEos] = 1.0;
  for (std::size_t id = 0; id < m.value.store().size(); ++id)
    for (auto& w : m.value.store().mutable_value(id).data()) w *= 10.0;
  return m;
}

std::vector<double> feature(std::uint64_t seed) {
  num::Rng rng(seed);
  std::vector<double> f(6);
  for (auto& x : f) x = rng.uniform(-1, 1);
  return f;
}

}  // namespace

TEST_CASE("micro-worlds: lookahead beams match brute-force enumeration at every step") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const std::size_t vocab = 2 + seed % 3;  // 2..4
    TableScorer t(vocab, seed);
    for (int li = 0; li <= 10; ++li) {
      const double lambda = li / 10.0;
      for (std::size_t beam : {1, 2, 3}) {
        const auto result = decode::lookahead_beam_search(t, {beam, lambda, 3, false});
        CHECK(result.kept == brute_force_beams(t, beam, lambda, 3));
      }
    }
  }
}

TEST_CASE("score bookkeeping matches a from-scratch recomputation") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    TableScorer t(4, seed);
    const double lambda = 0.4;
    const auto r = decode::lookahead_beam_search(t, {3, lambda, 4, false});
    for (const auto& h : r.ranked) {
      CHECK(std::abs(h.score - path_score(t, h.tokens, lambda)) < 1e-9);
      CHECK(h.completed == (h.tokens.back() == world::Vocab::kEos));
      CHECK(h.trace.size() == h.tokens.size());
    }
    for (std::size_t i = 1; i < r.ranked.size(); ++i) CHECK(r.ranked[i - 1].score >= r.ranked[i].score);
  }
}

TEST_CASE("live prefixes stay pairwise distinct") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    TableScorer t(3, seed);
    const auto r = decode::lookahead_beam_search(t, {5, 0.3, 4, false});
    for (const auto& step : r.kept) {
      auto sorted = step;
      std::sort(sorted.begin(), sorted.end());
      CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
      CHECK(step.size() <= 5);
    }
  }
}

TEST_CASE("truncation returns the best live hypothesis") {
  // <eos> has probability zero, so nothing can complete
  class NoEos final : public decode::Scorer {
   public:
    std::size_t vocab_size() const override { return 3; }
    std::any root() const override { return 0; }
    decode::Vec log_probs(const std::any&) const override { return {kNegInf, std::log(0.7), std::log(0.3)}; }
    decode::Vec extension_values(const std::any&) const override { return {0.0, 0.0, 0.0}; }
    std::any advance(const std::any& s, TokenId) const override { return s; }
  } scorer;
  const auto r = decode::lookahead_beam_search(scorer, {2, 1.0, 3, false});
  CHECK(r.truncated);
  REQUIRE(r.ranked.size() == 1);
  CHECK(r.ranked[0].tokens == Sentence{1, 1, 1});
  CHECK_FALSE(r.ranked[0].completed);
  const auto g = decode::greedy_decode(scorer, 3);
  CHECK(g.truncated);
  CHECK(g.best().tokens == Sentence{1, 1, 1});
  CHECK_THROWS_AS(decode::lookahead_beam_search(scorer, {0, 1.0, 3, false}), std::invalid_argument);
  CHECK_THROWS_AS(decode::lookahead_beam_search(scorer, {1, 1.5, 3, false}), std::invalid_argument);
}

TEST_CASE("greedy breaks ties toward the lowest id") {
  class Flat final : public decode::Scorer {
   public:
    std::size_t vocab_size() const override { return 3; }
    std::any root() const override { return 0; }
    decode::Vec log_probs(const std::any&) const override { return decode::Vec(3, std::log(1.0 / 3.0)); }
    decode::Vec extension_values(const std::any&) const override { return decode::Vec(3, 0.0); }
    std::any advance(const std::any& s, TokenId) const override { return s; }
  } scorer;
  CHECK(decode::greedy_decode(scorer, 5).best().tokens == Sentence{0});
  CHECK(decode::lookahead_beam_search(scorer, {1, 1.0, 5, false}).best().tokens == Sentence{0});
}

TEST_CASE("model decoding: lambda = 1 equals standard beam search, B = 1 equals greedy") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto m = make_models(seed);
    const decode::ModelContext ctx(m.policy, &m.value);
    for (std::uint64_t img = 0; img < 10; ++img) {
      const decode::ModelScorer s(ctx, feature(100 * seed + img));
      for (std::size_t beam : {1, 3, 5}) {
        const auto a = decode::lookahead_beam_search(s, {beam, 1.0, 12, false});
        const auto b = decode::beam_search(s, beam, 12);
        REQUIRE(a.ranked.size() == b.ranked.size());
        for (std::size_t i = 0; i < a.ranked.size(); ++i) {
          CHECK(a.ranked[i].tokens == b.ranked[i].tokens);
          CHECK(a.ranked[i].score == b.ranked[i].score);
        }
      }
      const auto g = decode::greedy_decode(s, 12);
      CHECK(decode::lookahead_beam_search(s, {1, 1.0, 12, false}).best().tokens == g.best().tokens);
      // beam at lambda = 1 never finds a lower log-probability than greedy
      if (!g.truncated)
        CHECK(decode::lookahead_beam_search(s, {5, 1.0, 12, false}).best().score >= g.best().score);
    }
  }
}

TEST_CASE("extension values equal value-network evaluation of the extended state") {
  for (auto variant : {critic::ValueVariant::full, critic::ValueVariant::hid, critic::ValueVariant::hid_im}) {
    const auto m = make_models(3, variant);
    const decode::ModelContext ctx(m.policy, &m.value);
    const auto f = feature(4);
    const decode::ModelScorer s(ctx, f);
    std::any state = s.root();
    Sentence prefix;
    for (TokenId w : {3, 5, 7}) {
      const auto values = s.extension_values(state);
      for (TokenId x = 0; x < 12; ++x) {
        Sentence ext = prefix;
        ext.push_back(x);
        CHECK(values[x] == critic::prefix_values(m.value, m.policy, f, ext).back());
      }
      state = s.advance(state, w);
      prefix.push_back(w);
    }
  }
}

TEST_CASE("completed scores recompute from the models") {
  const auto m = make_models(7);
  const decode::ModelContext ctx(m.policy, &m.value);
  const auto f = feature(9);
  const double lambda = 0.4;
  const auto r = decode::lookahead_beam_search(decode::ModelScorer(ctx, f), {4, lambda, 12, false});
  for (const auto& h : r.ranked) {
    double total = 0.0;
    const auto values = critic::prefix_values(m.value, m.policy, f, h.tokens);
    policy::PolicyState ps = m.policy.init_state(f);
    for (std::size_t t = 0; t < h.tokens.size(); ++t) {
      total += lambda * m.policy.log_probs(ps, policy::MaskMode::generation)[h.tokens[t]];
      total += (1 - lambda) * values[t + 1];
      if (t + 1 < h.tokens.size()) ps = m.policy.advance(ps, h.tokens[t]);
    }
    CHECK(std::abs(total - h.score) < 1e-9);
  }
  // at lambda = 1 the score is the generation-masked sequence log-probability
  const auto g = decode::lookahead_beam_search(decode::ModelScorer(ctx, f), {1, 1.0, 12, false});
  CHECK(g.best().score ==
        doctest::Approx(m.policy.sequence_logprob(f, g.best().tokens, policy::MaskMode::generation)).epsilon(1e-12));
}

TEST_CASE("batch decoding is identical serial and parallel, and across runs") {
  const auto m = make_models(11);
  const decode::ModelContext ctx(m.policy, &m.value);
  std::vector<world::Feature> feats;
  for (std::uint64_t i = 0; i < 16; ++i) feats.push_back(feature(500 + i));
  const BeamConfig cfg{3, 0.4, 12, false};
  const auto a = decode::decode_batch(ctx, feats, cfg, true);
  const auto b = decode::decode_batch(ctx, feats, cfg, false);
  const auto c = decode::decode_batch(ctx, feats, cfg, true);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    CHECK(a[i].best().tokens == b[i].best().tokens);
    CHECK(a[i].best().score == b[i].best().score);
    CHECK(a[i].best().tokens == c[i].best().tokens);
  }
}

TEST_CASE("embed_rerank: single candidate, order invariance, tie-breaks") {
  embed::EmbedConfig ec;
  ec.vocab_size = 12;
  ec.feature_dim = 6;
  const embed::EmbedModel e(ec, 2);
  const auto f = feature(1);
  std::vector<Hypothesis> one{{Sentence{3, 0}, -1.0, {}, true}};
  CHECK(&decode::embed_rerank(one, e, f) == &one[0]);
  CHECK_THROWS_AS(decode::embed_rerank(std::vector<Hypothesis>{}, e, f), std::invalid_argument);

  std::vector<Hypothesis> c{{Sentence{3, 4, 0}, -2.0, {}, true},
                            {Sentence{5, 0}, -1.0, {}, true},
                            {Sentence{6, 7, 8, 0}, -3.0, {}, true},
                            {Sentence{9, 0}, -1.5, {}, true}};
  const Sentence best = decode::embed_rerank(c, e, f).tokens;
  std::sort(c.begin(), c.end(), [](const auto& a, const auto& b) { return a.tokens < b.tokens; });
  do {
    CHECK(decode::embed_rerank(c, e, f).tokens == best);
  } while (std::next_permutation(c.begin(), c.end(),
                                 [](const auto& a, const auto& b) { return a.tokens < b.tokens; }));
  // equal rewards fall back to the original score, then token order
  std::vector<Hypothesis> tie{{Sentence{3, 0}, -2.0, {}, true}, {Sentence{3, 0}, -1.0, {}, true}};
  CHECK(decode::embed_rerank(tie, e, f).score == -1.0);
}
