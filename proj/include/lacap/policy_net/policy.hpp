#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "lacap/cells/layers.hpp"
#include "lacap/sceneworld/world.hpp"

namespace lacap::policy {

using cells::Vec;
using num::Tape;
using num::Var;
using world::Sentence;
using world::TokenId;

/// Which tokens are legal actions.
enum class MaskMode {
  none,        // every token (micro-worlds)
  likelihood,  // all but <pad>
  generation,  // all but <pad> and <unk>
};

/// 1 for legal tokens, 0 for masked ones.
std::vector<unsigned char> action_mask(std::size_t vocab_size, MaskMode mode);

struct PolicyConfig {
  std::size_t vocab_size = 0;
  std::size_t feature_dim = world::kDefaultFeatureDim;
  std::size_t hidden = 64;  // also the word-input dimension
};

struct PolicyState {
  cells::LstmState lstm;
  std::size_t t = 0;  // words consumed so far
};

/// Image-conditioned LSTM language model. The image feature is projected and
/// consumed by one LSTM step; each state yields the next-word distribution.
class PolicyNet {
 public:
  struct Bound {
    cells::Linear::Bound image;
    Var words;
    cells::LstmCell::Bound lstm;
    cells::Linear::Bound out;
  };
  struct TapedState {
    cells::LstmCell::TapedState lstm;
    std::size_t t = 0;
  };

  PolicyNet(const PolicyConfig& config, std::uint64_t seed);

  const PolicyConfig& config() const noexcept { return config_; }
  std::size_t vocab_size() const noexcept { return config_.vocab_size; }
  cells::ParamStore& store() noexcept { return store_; }
  const cells::ParamStore& store() const noexcept { return store_; }
  const cells::LstmCell& lstm() const noexcept { return lstm_; }
  const cells::Linear& output_layer() const noexcept { return out_; }
  cells::ParamId word_table_id() const noexcept { return words_; }
  std::span<const unsigned char> mask(MaskMode mode) const;

  /// Projected image input x0.
  Vec image_input(std::span<const double> feature) const;
  PolicyState init_state(std::span<const double> feature) const;
  /// Log-probabilities of the next word; masked entries are -inf.
  Vec log_probs(const PolicyState& state, MaskMode mode = MaskMode::likelihood) const;
  /// Consumes `word`.
  PolicyState advance(const PolicyState& state, TokenId word) const;
  /// advance() followed by log_probs() of the new state.
  std::pair<PolicyState, Vec> step(const PolicyState& state, TokenId word,
                                   MaskMode mode = MaskMode::likelihood) const;
  /// Sum of per-word log-probabilities of a forced sentence.
  double sequence_logprob(std::span<const double> feature, std::span<const TokenId> sentence,
                          MaskMode mode = MaskMode::likelihood) const;

  Bound bind(Tape& tape);
  TapedState init_state(Tape& tape, const Bound& p, std::span<const double> feature) const;
  Var logits(Tape& tape, const Bound& p, const TapedState& state) const;
  TapedState advance(Tape& tape, const Bound& p, const TapedState& state, TokenId word) const;
  /// Negative log-likelihood of a forced sentence.
  Var sequence_nll(Tape& tape, const Bound& p, std::span<const double> feature, std::span<const TokenId> sentence,
                   MaskMode mode = MaskMode::likelihood) const;

 private:
  void check_token(TokenId word) const;

  PolicyConfig config_;
  cells::ParamStore store_;
  cells::Linear image_;
  cells::ParamId words_ = 0;
  cells::LstmCell lstm_;
  cells::Linear out_;
  std::vector<unsigned char> masks_[3];
};

struct PretrainConfig {
  std::size_t epochs = 10;
  double lr = 1e-3;
  std::size_t batch = 32;
  std::uint64_t seed = 1;
};

/// Teacher forcing on every (scene, reference) pair. Returns the mean
/// per-sentence negative log-likelihood of each epoch.
std::vector<double> pretrain_policy(PolicyNet& policy, std::span<const world::CaptionedExample> data,
                                    const PretrainConfig& config);

/// Mean per-sentence negative log-likelihood over all pairs.
double mean_nll(const PolicyNet& policy, std::span<const world::CaptionedExample> data);

struct Rollout {
  Sentence tokens;
  std::vector<double> logps;  // log-probability of each chosen token
  std::size_t forced = 0;     // leading tokens taken from the prefix
};

/// Forces `prefix`, then samples from the generation-masked distribution
/// until <eos> or `max_len` tokens.
Rollout rollout(const PolicyNet& policy, std::span<const double> feature, num::Rng& rng, std::size_t max_len,
                std::span<const TokenId> prefix = {}, MaskMode mode = MaskMode::generation);

}  // namespace lacap::policy
