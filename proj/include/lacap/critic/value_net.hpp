#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lacap/cells/layers.hpp"
#include "lacap/policy_net/policy.hpp"

namespace lacap::critic {

using cells::Vec;
using num::Tape;
using num::Var;
using world::Sentence;
using world::TokenId;

enum class ValueVariant {
  full,    // own visual encoder, word table and LSTM
  hid,     // MLP over the policy hidden state
  hid_im,  // MLP over the policy hidden state and the policy image input
};

std::string to_string(ValueVariant v);
ValueVariant parse_value_variant(std::string_view s);

struct ValueConfig {
  ValueVariant variant = ValueVariant::full;
  std::size_t vocab_size = 0;
  std::size_t feature_dim = world::kDefaultFeatureDim;
  std::size_t visual_dim = 64;
  std::size_t hidden = 64;  // RNN width, also the word dimension
  std::size_t policy_hidden = 64;
  std::vector<std::size_t> mlp_hidden{128, 64};
};

/// Policy-side inputs required by the hid variants.
struct PolicyContext {
  std::span<const double> hidden;
  std::span<const double> image_input;
};

/// Incremental state of the full variant's encoder after a prefix.
struct ValueCursor {
  Vec visual;
  cells::LstmState lstm;
};

/// v(s): scalar estimate of the terminal reward from a decoding state,
/// squashed to [-1, 1].
class ValueNet {
 public:
  struct Bound {
    cells::Linear::Bound visual;
    std::optional<Var> words;
    cells::LstmCell::Bound lstm;
    cells::Mlp::Bound mlp;
  };
  struct TapedCursor {
    Var visual;
    cells::LstmCell::TapedState lstm;
  };
  struct TapedContext {
    Var hidden;
    Var image_input;
  };

  ValueNet(const ValueConfig& config, std::uint64_t seed);

  const ValueConfig& config() const noexcept { return config_; }
  ValueVariant variant() const noexcept { return config_.variant; }
  cells::ParamStore& store() noexcept { return store_; }
  const cells::ParamStore& store() const noexcept { return store_; }
  const cells::Mlp& mlp() const noexcept { return mlp_; }
  const cells::LstmCell& lstm() const noexcept { return lstm_; }
  cells::ParamId word_table_id() const;

  /// Value of (feature, prefix). hid variants need `context` computed by the
  /// policy on the same prefix.
  double evaluate(std::span<const double> feature, std::span<const TokenId> prefix,
                  const std::optional<PolicyContext>& context = std::nullopt) const;

  ValueCursor start(std::span<const double> feature) const;
  ValueCursor advance(const ValueCursor& cursor, TokenId word) const;
  double value(const ValueCursor& cursor, const std::optional<PolicyContext>& context) const;
  /// Input dimension of the MLP and the split point after which per-prefix
  /// inputs start (the leading part is fixed per image).
  std::size_t fixed_input_dim() const;

  Bound bind(Tape& tape);
  TapedCursor start(Tape& tape, const Bound& p, std::span<const double> feature) const;
  TapedCursor advance(Tape& tape, const Bound& p, const TapedCursor& cursor, TokenId word) const;
  Var value(Tape& tape, const Bound& p, const TapedCursor& cursor, const std::optional<TapedContext>& context) const;

 private:
  void check_context(bool present) const;
  void check_token(TokenId word) const;

  ValueConfig config_;
  cells::ParamStore store_;
  cells::Linear visual_;
  std::optional<cells::ParamId> words_;
  cells::LstmCell lstm_;
  cells::Mlp mlp_;
};

/// Plain-path policy context for a prefix: hidden state after consuming it
/// and the projected image input.
struct PolicyTrace {
  Vec image_input;
  std::vector<Vec> hidden;  // hidden[t] after t words, t = 0..len
};
PolicyTrace trace_policy(const policy::PolicyNet& policy, std::span<const double> feature,
                         std::span<const TokenId> tokens);

/// Value of every prefix of `tokens` (lengths 0..len) on the plain path.
std::vector<double> prefix_values(const ValueNet& value, const policy::PolicyNet& policy,
                                  std::span<const double> feature, std::span<const TokenId> tokens);

using RewardFn = std::function<double(std::span<const double> feature, std::span<const TokenId> sentence)>;

struct ValuePretrainConfig {
  std::size_t epochs = 10;
  double lr = 1e-3;
  std::size_t batch = 32;
  std::size_t rollouts_per_scene = 1;
  std::size_t max_len = world::kMaxCaptionLength;
  std::uint64_t seed = 1;
};

struct ValuePretrainStats {
  std::vector<double> mse;                 // per epoch
  std::vector<std::size_t> states_per_rollout;  // training states drawn from each rollout
};

/// Regresses v on the terminal reward of policy rollouts, one uniformly drawn
/// state (prefix length 0..T) per rollout. Fresh rollouts every epoch.
ValuePretrainStats pretrain_value(ValueNet& value, const policy::PolicyNet& policy,
                                  std::span<const world::CaptionedExample> data, const RewardFn& reward,
                                  const ValuePretrainConfig& config);

/// Sampled rollouts with their terminal rewards, for held-out evaluation.
struct ScoredRollout {
  std::size_t example;
  Sentence tokens;
  double reward;
};
std::vector<ScoredRollout> sample_scored_rollouts(const policy::PolicyNet& policy,
                                                  std::span<const world::CaptionedExample> data,
                                                  const RewardFn& reward, std::size_t per_scene,
                                                  std::size_t max_len, std::uint64_t seed);

struct ValueDiagnostics {
  double mse = 0.0;            // over every prefix of every rollout
  double zero_mse = 0.0;       // same states, predicting 0
  double spearman_penultimate = 0.0;
};
ValueDiagnostics diagnose_value(const ValueNet& value, const policy::PolicyNet& policy,
                                std::span<const world::CaptionedExample> data,
                                std::span<const ScoredRollout> rollouts);

double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace lacap::critic
