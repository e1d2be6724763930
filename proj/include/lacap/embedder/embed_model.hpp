#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lacap/cells/layers.hpp"
#include "lacap/sceneworld/world.hpp"

namespace lacap::embed {

using cells::Vec;
using num::Tape;
using num::Var;
using world::Sentence;
using world::TokenId;

struct EmbedConfig {
  std::size_t vocab_size = 0;
  std::size_t feature_dim = 64;
  std::size_t word_dim = 32;
  std::size_t embed_dim = 64;
  double margin = 0.2;
};

/// Visual-semantic embedding: a GRU over word vectors for sentences and a
/// bias-free linear map for image features, both L2-normalized.
class EmbedModel {
 public:
  struct Bound {
    Var words;
    cells::GruCell::Bound gru;
    cells::Linear::Bound image;
  };

  EmbedModel(const EmbedConfig& config, std::uint64_t seed);

  const EmbedConfig& config() const noexcept { return config_; }
  cells::ParamStore& store() noexcept { return store_; }
  const cells::ParamStore& store() const noexcept { return store_; }

  /// Unit-length final GRU state. Throws on an empty sentence or a zero state.
  Vec embed_sentence(std::span<const TokenId> sentence) const;
  /// Unit-length f_e(feature). Throws on a zero-norm projection.
  Vec embed_image(std::span<const double> feature) const;
  /// Cosine similarity between the image and sentence embeddings.
  double reward(std::span<const double> feature, std::span<const TokenId> sentence) const;

  Bound bind(Tape& tape);
  Var sentence_var(Tape& tape, const Bound& p, std::span<const TokenId> sentence) const;
  Var image_var(Tape& tape, const Bound& p, std::span<const double> feature) const;

 private:
  EmbedConfig config_;
  cells::ParamStore store_;
  cells::ParamId words_ = 0;
  cells::GruCell gru_;
  cells::Linear image_map_;
};

/// Bidirectional hinge ranking loss summed over all in-batch negatives.
/// Pairs sharing a group id (same scene) are not used as negatives.
Var ranking_loss(Tape& tape, std::span<const Var> images, std::span<const Var> sentences,
                 std::span<const std::uint64_t> groups, double margin);

/// Same loss on precomputed unit embeddings.
double ranking_loss_value(std::span<const Vec> images, std::span<const Vec> sentences,
                          std::span<const std::uint64_t> groups, double margin);

struct EmbedPair {
  const world::Feature* feature;
  const Sentence* sentence;
  std::uint64_t group;
};

/// Ranking loss of `model` on a batch (size >= 2), built on `tape`.
Var ranking_loss(Tape& tape, EmbedModel& model, const EmbedModel::Bound& p, std::span<const EmbedPair> batch);

struct EmbedTrainConfig {
  std::size_t epochs = 12;
  double lr = 2e-3;
  std::size_t batch = 32;
  std::uint64_t seed = 1;
};

/// Per-epoch mean training loss per batch. Each epoch visits every scene once
/// with one randomly chosen reference.
std::vector<double> train_embedding(EmbedModel& model, std::span<const world::CaptionedExample> train,
                                    const EmbedTrainConfig& config);

/// Mean batch loss on `examples` using each scene's first reference.
double heldout_ranking_loss(const EmbedModel& model, std::span<const world::CaptionedExample> examples,
                            std::size_t batch);

/// Sentence-to-image recall@1: each scene's first reference ranks all
/// candidate images in `examples`.
double recall_at_1(const EmbedModel& model, std::span<const world::CaptionedExample> examples);

}  // namespace lacap::embed
