#include <doctest.h>

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "lacap/evalkit/ablation.hpp"
#include "lacap/evalkit/metrics.hpp"

using namespace lacap;
using eval::Variant;
using world::Sentence;

namespace {

constexpr world::TokenId A = 3, B = 4, C = 5, D = 6;
double bleu1(const std::vector<Sentence>& c, const std::vector<std::vector<Sentence>>& r) {
  return eval::corpus_bleu(c, r, 1);
}

}  // namespace

TEST_CASE("BLEU and ROUGE-L agree with the reference script on the frozen cases") {
  std::ifstream in(LACAP_TEST_DATA_DIR "/metric_cases.json");
  REQUIRE(in);
  const auto cases = nlohmann::json::parse(in);
  REQUIRE(cases.size() == 50);
  for (const auto& c : cases) {
    CAPTURE(c["name"].get<std::string>());
    const auto cand = c["candidates"].get<std::vector<Sentence>>();
    const auto refs = c["references"].get<std::vector<std::vector<Sentence>>>();
    const auto expected = c["bleu"].get<std::vector<double>>();
    const auto all = eval::corpus_bleu_all(cand, refs);
    for (std::size_t n = 1; n <= 4; ++n) {
      CHECK(std::abs(eval::corpus_bleu(cand, refs, n) - expected[n - 1]) <= 1e-9);
      CHECK(std::abs(all[n - 1] - expected[n - 1]) <= 1e-9);
    }
    CHECK(std::abs(eval::rouge_l(cand, refs) - c["rouge_l"].get<double>()) <= 1e-9);
  }
}

TEST_CASE("hand-computed metric values") {
  CHECK(bleu1({{A, A, A}}, {{{A, B}}}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(eval::rouge_l(std::vector<Sentence>{{A, B, C}}, std::vector<std::vector<Sentence>>{{{A, C}}}) ==
        doctest::Approx(0.8).epsilon(1e-15));
  CHECK(eval::lcs_length(Sentence{A, B, C}, Sentence{A, C}) == 2);

  const std::vector<Sentence> same{{A, B, C, D, 0}, {D, C, B, A}};
  const std::vector<std::vector<Sentence>> refs{{{B, B}, {A, B, C, D, 0}}, {{D, C, B, A}}};
  for (std::size_t n = 1; n <= 4; ++n) CHECK(eval::corpus_bleu(same, refs, n) == 1.0);
  CHECK(eval::rouge_l(same, refs) == 1.0);

  // shorter than every reference: penalty strictly below 1
  const double short_bleu = bleu1({{A, B}}, {{{A, B, C}, {A, B, C, D}}});
  CHECK(short_bleu < 1.0);
  CHECK(short_bleu == doctest::Approx(std::exp(1.0 - 3.0 / 2.0)).epsilon(1e-15));

  CHECK(eval::rouge_l(std::vector<Sentence>{{A, B}}, std::vector<std::vector<Sentence>>{{{C, D}}}) == 0.0);
  CHECK(bleu1({{A, B}}, {{{C, D}}}) == 0.0);

  // a trailing <eos> is not a word
  CHECK(bleu1({{A, B, 0}}, {{{A, B}}}) == 1.0);
  CHECK(bleu1({{A, 0}}, {{{A, B, 0}}}) == doctest::Approx(std::exp(1.0 - 2.0)).epsilon(1e-15));
}

TEST_CASE("metric inputs are validated") {
  const std::vector<Sentence> none;
  const std::vector<std::vector<Sentence>> no_refs;
  CHECK_THROWS_AS(eval::corpus_bleu(none, no_refs, 4), std::invalid_argument);
  CHECK_THROWS_AS(eval::rouge_l(none, no_refs), std::invalid_argument);
  const std::vector<Sentence> one{{A}};
  CHECK_THROWS_AS(eval::corpus_bleu(one, no_refs, 1), std::invalid_argument);
  CHECK_THROWS_AS(eval::corpus_bleu(one, std::vector<std::vector<Sentence>>{{}}, 1), std::invalid_argument);
  CHECK_THROWS_AS(eval::corpus_bleu(one, std::vector<std::vector<Sentence>>{{{A}}}, 5), std::invalid_argument);
}

TEST_CASE("metrics stay in [0,1] and corrupting a token never raises BLEU-1") {
  num::Rng rng(41);
  constexpr world::TokenId kForeign = 99;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t images = 1 + rng.index(5);
    std::vector<Sentence> cands;
    std::vector<std::vector<Sentence>> refs(images);
    const auto sentence = [&] {
      Sentence s(1 + rng.index(10));
      for (auto& w : s) w = static_cast<world::TokenId>(3 + rng.index(4));
      return s;
    };
    for (std::size_t i = 0; i < images; ++i) {
      for (std::size_t k = 0; k <= rng.index(3); ++k) refs[i].push_back(sentence());
      cands.push_back(rng.uniform() < 0.3 ? refs[i][0] : sentence());
    }
    const auto before = eval::corpus_bleu_all(cands, refs);
    for (double b : before) CHECK((b >= 0.0 && b <= 1.0));
    const double r = eval::rouge_l(cands, refs);
    CHECK((r >= 0.0 && r <= 1.0));

    for (auto& c : cands) c[rng.index(c.size())] = kForeign;
    CHECK(eval::corpus_bleu(cands, refs, 1) <= before[0]);
  }
}

TEST_CASE("ablation configs: names, validation, sweep grids") {
  for (auto v : {Variant::sl, Variant::sl_embed, Variant::sl_raw_vn, Variant::full_model, Variant::hid_vn,
                 Variant::hid_im_vn})
    CHECK(eval::parse_variant(eval::to_string(v)) == v);
  CHECK(eval::to_string(Variant::hid_im_vn) == "hid-Im-VN");
  CHECK_THROWS_AS(eval::parse_variant("RL"), std::invalid_argument);

  CHECK_NOTHROW(eval::validate({Variant::sl, 1.0, 3}));
  CHECK_THROWS_AS(eval::validate({Variant::sl, 0.4, 3}), std::invalid_argument);
  CHECK_THROWS_AS(eval::validate({Variant::sl_embed, 0.0, 3}), std::invalid_argument);
  CHECK_THROWS_AS(eval::validate({Variant::full_model, 1.5, 3}), std::invalid_argument);
  CHECK_THROWS_AS(eval::validate({Variant::full_model, 0.4, 0}), std::invalid_argument);

  const auto lambdas = eval::lambda_grid(Variant::full_model, 5, 2);
  REQUIRE(lambdas.size() == 11);
  for (std::size_t i = 0; i < lambdas.size(); ++i) CHECK(lambdas[i].lambda == doctest::Approx(i / 10.0));
  CHECK(lambdas.front().lambda == 0.0);
  CHECK(lambdas.back().lambda == 1.0);
  const auto beams = eval::beam_grid(Variant::sl, 1.0, 2);
  std::vector<std::size_t> widths;
  for (const auto& c : beams) widths.push_back(c.beam);
  CHECK(widths == std::vector<std::size_t>{1, 3, 5, 10, 25});
}

namespace {

struct SmallModels {
  world::Dataset data;
  policy::PolicyNet sl, rl;
  critic::ValueNet raw, rlv, hid, hid_im;
  embed::EmbedModel embed;

  eval::Checkpoints checkpoints() const { return {&sl, &rl, &raw, &rlv, &hid, &hid_im, &embed}; }
};

critic::ValueConfig value_config(critic::ValueVariant v, std::size_t vocab) {
  critic::ValueConfig c;
  c.variant = v;
  c.vocab_size = vocab;
  c.hidden = 16;
  c.policy_hidden = 16;
  c.visual_dim = 16;
  c.mlp_hidden = {16, 8};
  return c;
}

SmallModels small_models() {
  world::DatasetConfig dc;
  dc.n_train = 1;
  dc.n_val = 1;
  dc.n_test = 12;
  const std::size_t v = world::CaptionGrammar().vocab().size();
  policy::PolicyConfig pc;
  pc.vocab_size = v;
  pc.hidden = 16;
  embed::EmbedConfig ec;
  ec.vocab_size = v;
  SmallModels m{world::generate_dataset(dc),
                policy::PolicyNet(pc, 1),
                policy::PolicyNet(pc, 2),
                critic::ValueNet(value_config(critic::ValueVariant::full, v), 3),
                critic::ValueNet(value_config(critic::ValueVariant::full, v), 4),
                critic::ValueNet(value_config(critic::ValueVariant::hid, v), 5),
                critic::ValueNet(value_config(critic::ValueVariant::hid_im, v), 6),
                embed::EmbedModel(ec, 7)};
  for (auto* p : {&m.sl, &m.rl}) {
    auto& b = p->store().mutable_value(p->store().find("policy.out.b"));
    b[world::Vocab::kEos] = 0.3;  // untrained models still end within the cap sometimes
  }
  return m;
}

}  // namespace

TEST_CASE("run_ablation: every variant evaluates, reruns are identical, missing models are named") {
  const auto m = small_models();
  std::vector<eval::AblationConfig> configs{{Variant::sl, 1.0, 3},        {Variant::sl_embed, 1.0, 3},
                                            {Variant::sl_raw_vn, 0.4, 3}, {Variant::full_model, 0.4, 3},
                                            {Variant::hid_vn, 0.4, 3},    {Variant::hid_im_vn, 0.4, 3}};
  const auto rows = eval::run_ablation(m.data.test, m.checkpoints(), configs);
  REQUIRE(rows.size() == configs.size());
  for (const auto& row : rows) {
    const auto& r = row.report;
    for (double x : {r.bleu1, r.bleu2, r.bleu3, r.bleu4, r.rouge_l}) CHECK((x >= 0.0 && x <= 1.0));
    CHECK((r.mean_reward >= -1.0 && r.mean_reward <= 1.0));
    REQUIRE(r.per_image.size() == m.data.test.size());
    double sum = 0.0;
    for (const auto& img : r.per_image) sum += img.reward;
    CHECK(r.mean_reward == doctest::Approx(sum / r.per_image.size()));
  }
  CHECK(rows == eval::run_ablation(m.data.test, m.checkpoints(), configs));

  // SL-Embed picks, among the SL beam's completed captions, one with reward >= the SL pick
  std::size_t completed = 0;
  for (std::size_t i = 0; i < m.data.test.size(); ++i)
    if (!rows[0].report.per_image[i].truncated) {
      ++completed;
      CHECK(rows[1].report.per_image[i].reward >= rows[0].report.per_image[i].reward);
    }
  CHECK(completed > 0);

  auto missing = m.checkpoints();
  missing.rl_value = nullptr;
  try {
    eval::run_ablation(m.data.test, missing, configs);
    FAIL("expected MissingCheckpoint");
  } catch (const eval::MissingCheckpoint& e) {
    CHECK(e.name() == "rl_value");
    CHECK(std::string(e.what()).find("Full-model") != std::string::npos);
  }
  missing = m.checkpoints();
  missing.embed = nullptr;
  CHECK_THROWS_AS(eval::run_ablation(m.data.test, missing, std::span(configs).first(1)), eval::MissingCheckpoint);
}

TEST_CASE("reports render as CSV and markdown") {
  const auto m = small_models();
  const auto configs = eval::beam_grid(Variant::sl, 1.0, 9);
  const auto rows = eval::run_ablation(std::span(m.data.test).first(4), m.checkpoints(), configs);
  std::ostringstream csv, md;
  eval::write_report_csv(csv, rows);
  eval::write_report_markdown(md, rows);
  std::size_t csv_lines = 0, md_lines = 0;
  for (char ch : csv.str()) csv_lines += ch == '\n';
  for (char ch : md.str()) md_lines += ch == '\n';
  CHECK(csv_lines == 1 + configs.size());
  CHECK(md_lines == 2 + configs.size());
  CHECK(csv.str().rfind("variant,lambda,beam,seed,bleu1", 0) == 0);
  CHECK(md.str().find("| SL | 1.0 | 25 |") != std::string::npos);
}
