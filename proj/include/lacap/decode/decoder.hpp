#pragma once

#include <any>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "lacap/critic/value_net.hpp"
#include "lacap/embedder/embed_model.hpp"
#include "lacap/policy_net/policy.hpp"

namespace lacap::decode {

using cells::Vec;
using world::Sentence;
using world::TokenId;

/// Step-wise scoring model behind every search. States are opaque to the
/// search; illegal words carry a log-probability of -inf.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual std::any root() const = 0;
  /// log p(w | prefix) for every word w.
  virtual Vec log_probs(const std::any& state) const = 0;
  /// v(prefix + w) for every word w.
  virtual Vec extension_values(const std::any& state) const = 0;
  virtual std::any advance(const std::any& state, TokenId word) const = 0;
};

struct StepTrace {
  double logp = 0.0;
  double value = 0.0;  // 0 when the value was not consulted
};

struct Hypothesis {
  Sentence tokens;
  double score = 0.0;
  std::vector<StepTrace> trace;
  bool completed = false;
};

struct DecodeResult {
  std::vector<Hypothesis> ranked;  // completed hypotheses, best first
  bool truncated = false;          // nothing completed; ranked holds the best live one
  /// Extensions kept at each step (live and newly completed), in rank order.
  std::vector<std::vector<Sentence>> kept;

  const Hypothesis& best() const { return ranked.front(); }
};

struct BeamConfig {
  std::size_t beam = 10;
  double lambda = 0.4;
  std::size_t max_len = world::kMaxCaptionLength;
  bool length_normalize = false;
};

/// Beam search whose extensions are scored by
/// S + lambda * log p(w | prefix) + (1 - lambda) * v(prefix + w).
/// With lambda == 1 the value is never evaluated.
DecodeResult lookahead_beam_search(const Scorer& scorer, const BeamConfig& config);

/// Log-probability beam search.
DecodeResult beam_search(const Scorer& scorer, std::size_t beam, std::size_t max_len,
                         bool length_normalize = false);

/// Arg-max word per step, lowest id on ties.
DecodeResult greedy_decode(const Scorer& scorer, std::size_t max_len);

/// Scorer over a policy and optional value network for one image. Reuses
/// per-model word tables across images.
class ModelContext {
 public:
  ModelContext(const policy::PolicyNet& policy, const critic::ValueNet* value);

  const policy::PolicyNet& policy() const noexcept { return policy_; }
  const critic::ValueNet* value() const noexcept { return value_; }
  std::span<const double> policy_input_gates(TokenId w) const;
  std::span<const double> value_input_gates(TokenId w) const;

 private:
  const policy::PolicyNet& policy_;
  const critic::ValueNet* value_;
  std::vector<double> policy_gates_;  // vocab x 4m
  std::vector<double> value_gates_;
};

class ModelScorer final : public Scorer {
 public:
  ModelScorer(const ModelContext& context, std::span<const double> feature,
              policy::MaskMode mode = policy::MaskMode::generation);

  std::size_t vocab_size() const override;
  std::any root() const override;
  Vec log_probs(const std::any& state) const override;
  Vec extension_values(const std::any& state) const override;
  std::any advance(const std::any& state, TokenId word) const override;

 private:
  struct State {
    policy::PolicyState policy;
    critic::ValueCursor value;
  };

  const ModelContext& ctx_;
  std::vector<double> feature_;
  policy::MaskMode mode_;
  Vec image_input_;
  Vec mlp_partial_;  // first MLP layer applied to the per-image inputs
};

Sentence greedy_decode(const policy::PolicyNet& policy, std::span<const double> feature,
                       std::size_t max_len = world::kMaxCaptionLength);

/// Picks the candidate with the highest embedding reward; ties go to the
/// higher original score, then the lexicographically smaller sentence.
const Hypothesis& embed_rerank(std::span<const Hypothesis> candidates, const embed::EmbedModel& embed,
                               std::span<const double> feature);

/// Decodes every feature, in parallel across images. Output order follows
/// the input order and does not depend on the thread count.
std::vector<DecodeResult> decode_batch(const ModelContext& context, std::span<const world::Feature> features,
                                       const BeamConfig& config, bool parallel = true);

}  // namespace lacap::decode
