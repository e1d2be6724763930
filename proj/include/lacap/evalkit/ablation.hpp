#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lacap/critic/value_net.hpp"
#include "lacap/evalkit/metrics.hpp"
#include "lacap/embedder/embed_model.hpp"
#include "lacap/policy_net/policy.hpp"
#include "lacap/sceneworld/world.hpp"

namespace lacap::eval {

enum class Variant { sl, sl_embed, sl_raw_vn, full_model, hid_vn, hid_im_vn };

std::string to_string(Variant v);
Variant parse_variant(std::string_view s);
/// Variants that decode with the plain log-probability beam (lambda pinned to 1).
bool uses_value(Variant v);

struct AblationConfig {
  Variant variant = Variant::full_model;
  double lambda = 0.4;
  std::size_t beam = 10;
  std::uint64_t seed = 1;
  std::size_t max_len = world::kMaxCaptionLength;

  friend bool operator==(const AblationConfig&, const AblationConfig&) = default;
};

/// Throws std::invalid_argument on a lambda outside [0,1], a zero beam or a
/// value-free variant with lambda != 1.
void validate(const AblationConfig& config);

/// Trained models, any of which may be absent.
struct Checkpoints {
  const policy::PolicyNet* sl_policy = nullptr;
  const policy::PolicyNet* rl_policy = nullptr;
  const critic::ValueNet* raw_value = nullptr;  // pretrained, before RL
  const critic::ValueNet* rl_value = nullptr;
  const critic::ValueNet* hid_value = nullptr;
  const critic::ValueNet* hid_im_value = nullptr;
  const embed::EmbedModel* embed = nullptr;
};

class MissingCheckpoint : public std::runtime_error {
 public:
  MissingCheckpoint(Variant variant, const std::string& name);
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

struct ImageResult {
  Sentence caption;
  double reward = 0.0;
  double rouge_l = 0.0;
  bool truncated = false;

  friend bool operator==(const ImageResult&, const ImageResult&) = default;
};

struct MetricReport {
  double bleu1 = 0.0, bleu2 = 0.0, bleu3 = 0.0, bleu4 = 0.0;
  double rouge_l = 0.0;
  double mean_reward = 0.0;
  std::vector<ImageResult> per_image;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

MetricReport score_captions(std::span<const Sentence> captions, std::span<const world::CaptionedExample> examples,
                            const embed::EmbedModel& embed);

/// Captions for one configuration, in example order.
std::vector<Sentence> caption_images(std::span<const world::CaptionedExample> examples, const Checkpoints& models,
                                     const AblationConfig& config, std::vector<bool>* truncated = nullptr);

struct AblationRow {
  AblationConfig config;
  MetricReport report;

  friend bool operator==(const AblationRow&, const AblationRow&) = default;
};

std::vector<AblationRow> run_ablation(std::span<const world::CaptionedExample> examples, const Checkpoints& models,
                                      std::span<const AblationConfig> configs);

/// lambda in {0, 0.1, ..., 1}.
std::vector<AblationConfig> lambda_grid(Variant variant, std::size_t beam, std::uint64_t seed);
/// beam in {1, 3, 5, 10, 25}.
std::vector<AblationConfig> beam_grid(Variant variant, double lambda, std::uint64_t seed);

void write_report_csv(std::ostream& out, std::span<const AblationRow> rows);
void write_report_markdown(std::ostream& out, std::span<const AblationRow> rows);
void write_report_csv(const std::filesystem::path& path, std::span<const AblationRow> rows);
void write_report_markdown(const std::filesystem::path& path, std::span<const AblationRow> rows);

}  // namespace lacap::eval
