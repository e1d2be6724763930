#include "lacap/evalkit/ablation.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "lacap/decode/decoder.hpp"

namespace lacap::eval {

namespace {

constexpr std::array<std::pair<Variant, std::string_view>, 6> kNames{{
    {Variant::sl, "SL"},
    {Variant::sl_embed, "SL-Embed"},
    {Variant::sl_raw_vn, "SL-RawVN"},
    {Variant::full_model, "Full-model"},
    {Variant::hid_vn, "hid-VN"},
    {Variant::hid_im_vn, "hid-Im-VN"},
}};

struct Models {
  const policy::PolicyNet* policy;
  const critic::ValueNet* value;
};

template <class T>
const T& require(const T* model, Variant v, const char* name) {
  if (!model) throw MissingCheckpoint(v, name);
  return *model;
}

Models select(const Checkpoints& c, Variant v) {
  switch (v) {
    case Variant::sl:
      return {&require(c.sl_policy, v, "sl_policy"), nullptr};
    case Variant::sl_embed:
      require(c.embed, v, "embed");
      return {&require(c.sl_policy, v, "sl_policy"), nullptr};
    case Variant::sl_raw_vn:
      return {&require(c.sl_policy, v, "sl_policy"), &require(c.raw_value, v, "raw_value")};
    case Variant::full_model:
      return {&require(c.rl_policy, v, "rl_policy"), &require(c.rl_value, v, "rl_value")};
    case Variant::hid_vn:
      return {&require(c.sl_policy, v, "sl_policy"), &require(c.hid_value, v, "hid_value")};
    case Variant::hid_im_vn:
      return {&require(c.sl_policy, v, "sl_policy"), &require(c.hid_im_value, v, "hid_im_value")};
  }
  throw std::logic_error("unhandled variant");
}

}  // namespace

std::string to_string(Variant v) {
  for (const auto& [k, name] : kNames)
    if (k == v) return std::string(name);
  throw std::logic_error("unhandled variant");
}

Variant parse_variant(std::string_view s) {
  for (const auto& [k, name] : kNames)
    if (name == s) return k;
  std::string known;
  for (const auto& [k, name] : kNames) known += (known.empty() ? "" : ", ") + std::string(name);
  throw std::invalid_argument("unknown variant '" + std::string(s) + "' (expected one of " + known + ")");
}

bool uses_value(Variant v) { return v != Variant::sl && v != Variant::sl_embed; }

void validate(const AblationConfig& config) {
  if (!(config.lambda >= 0.0 && config.lambda <= 1.0))
    throw std::invalid_argument("lambda must lie in [0, 1]");
  if (config.beam == 0) throw std::invalid_argument("beam must be positive");
  if (config.max_len == 0) throw std::invalid_argument("max_len must be positive");
  if (!uses_value(config.variant) && config.lambda != 1.0)
    throw std::invalid_argument(to_string(config.variant) + " decodes without a value network; lambda must be 1");
}

MissingCheckpoint::MissingCheckpoint(Variant variant, const std::string& name)
    : std::runtime_error("variant " + to_string(variant) + " needs checkpoint '" + name + "'"), name_(name) {}

MetricReport score_captions(std::span<const Sentence> captions, std::span<const world::CaptionedExample> examples,
                            const embed::EmbedModel& embed) {
  if (captions.size() != examples.size()) throw std::invalid_argument("score_captions: size mismatch");
  std::vector<std::vector<Sentence>> refs;
  refs.reserve(examples.size());
  for (const auto& ex : examples) refs.push_back(ex.references);

  MetricReport r;
  const auto bleu = corpus_bleu_all(captions, refs);
  r.bleu1 = bleu[0];
  r.bleu2 = bleu[1];
  r.bleu3 = bleu[2];
  r.bleu4 = bleu[3];
  r.rouge_l = rouge_l(captions, refs);
  for (std::size_t i = 0; i < captions.size(); ++i) {
    ImageResult img;
    img.caption = captions[i];
    img.reward = embed.reward(examples[i].feature, captions[i]);
    img.rouge_l = sentence_rouge_l(captions[i], refs[i]);
    r.mean_reward += img.reward;
    r.per_image.push_back(std::move(img));
  }
  r.mean_reward /= static_cast<double>(captions.size());
  return r;
}

std::vector<Sentence> caption_images(std::span<const world::CaptionedExample> examples, const Checkpoints& models,
                                     const AblationConfig& config, std::vector<bool>* truncated) {
  validate(config);
  const Models m = select(models, config.variant);
  const decode::ModelContext ctx(*m.policy, m.value);
  std::vector<world::Feature> features;
  features.reserve(examples.size());
  for (const auto& ex : examples) features.push_back(ex.feature);

  const decode::BeamConfig beam{config.beam, uses_value(config.variant) ? config.lambda : 1.0, config.max_len};
  const auto results = decode::decode_batch(ctx, features, beam);
  std::vector<Sentence> out;
  out.reserve(results.size());
  if (truncated) truncated->assign(results.size(), false);
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& res = results[i];
    if (truncated) (*truncated)[i] = res.truncated;
    if (config.variant == Variant::sl_embed && !res.truncated)
      out.push_back(decode::embed_rerank(res.ranked, *models.embed, features[i]).tokens);
    else
      out.push_back(res.best().tokens);
  }
  return out;
}

std::vector<AblationRow> run_ablation(std::span<const world::CaptionedExample> examples, const Checkpoints& models,
                                      std::span<const AblationConfig> configs) {
  if (examples.empty()) throw std::invalid_argument("run_ablation: empty evaluation set");
  if (configs.empty()) return {};
  const auto& embed = require(models.embed, configs.front().variant, "embed");
  // Fail before decoding anything if a checkpoint is missing.
  for (const auto& c : configs) {
    validate(c);
    select(models, c.variant);
  }
  std::vector<AblationRow> rows;
  for (const auto& c : configs) {
    std::vector<bool> truncated;
    const auto captions = caption_images(examples, models, c, &truncated);
    MetricReport report = score_captions(captions, examples, embed);
    for (std::size_t i = 0; i < truncated.size(); ++i) report.per_image[i].truncated = truncated[i];
    rows.push_back({c, std::move(report)});
  }
  return rows;
}

std::vector<AblationConfig> lambda_grid(Variant variant, std::size_t beam, std::uint64_t seed) {
  std::vector<AblationConfig> out;
  for (int i = 0; i <= 10; ++i) out.push_back({variant, i / 10.0, beam, seed});
  return out;
}

std::vector<AblationConfig> beam_grid(Variant variant, double lambda, std::uint64_t seed) {
  std::vector<AblationConfig> out;
  for (std::size_t b : {1, 3, 5, 10, 25}) out.push_back({variant, lambda, b, seed});
  return out;
}

void write_report_csv(std::ostream& out, std::span<const AblationRow> rows) {
  const auto old = out.precision(17);
  out << "variant,lambda,beam,seed,bleu1,bleu2,bleu3,bleu4,rougeL,mean_reward\n";
  for (const auto& r : rows) {
    const auto& m = r.report;
    out << to_string(r.config.variant) << ',' << r.config.lambda << ',' << r.config.beam << ',' << r.config.seed
        << ',' << m.bleu1 << ',' << m.bleu2 << ',' << m.bleu3 << ',' << m.bleu4 << ',' << m.rouge_l << ','
        << m.mean_reward << '\n';
  }
  out.precision(old);
}

void write_report_markdown(std::ostream& out, std::span<const AblationRow> rows) {
  const auto old_flags = out.flags();
  const auto old = out.precision(3);
  out << std::fixed;
  out << "| variant | lambda | beam | BLEU-1 | BLEU-2 | BLEU-3 | BLEU-4 | ROUGE-L | reward |\n";
  out << "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    const auto& m = r.report;
    out << "| " << to_string(r.config.variant) << " | " << std::setprecision(1) << r.config.lambda << " | "
        << r.config.beam << std::setprecision(3) << " | " << m.bleu1 << " | " << m.bleu2 << " | " << m.bleu3
        << " | " << m.bleu4 << " | " << m.rouge_l << " | " << m.mean_reward << " |\n";
  }
  out.precision(old);
  out.flags(old_flags);
}

void write_report_csv(const std::filesystem::path& path, std::span<const AblationRow> rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_report_csv(out, rows);
}

void write_report_markdown(const std::filesystem::path& path, std::span<const AblationRow> rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_report_markdown(out, rows);
}

}  // namespace lacap::eval
