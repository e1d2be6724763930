#include "lacap/embedder/embed_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "lacap/numcore/kernels.hpp"

namespace lacap::embed {

namespace {

Vec normalized(Vec v, const char* what) {
  const double n = std::sqrt(num::kernels::dot(v, v));
  if (!(n > 0.0)) throw num::NumericError(std::string(what) + ": zero-norm embedding");
  for (auto& x : v) x /= n;
  return v;
}

}  // namespace

EmbedModel::EmbedModel(const EmbedConfig& config, std::uint64_t seed) : config_(config) {
  if (config.vocab_size == 0) throw std::invalid_argument("EmbedModel: vocabulary size must be positive");
  if (!(config.margin > 0.0)) throw std::invalid_argument("EmbedModel: margin must be positive");
  num::Rng rng(seed);
  words_ = store_.add_uniform("embed.words", {config.vocab_size, config.word_dim}, cells::kInitScale, rng);
  gru_ = cells::GruCell(store_, "embed.gru", config.word_dim, config.embed_dim, rng);
  image_map_ = cells::Linear(store_, "embed.image", config.feature_dim, config.embed_dim, false, rng);
}

Vec EmbedModel::embed_sentence(std::span<const TokenId> sentence) const {
  if (sentence.empty()) throw std::invalid_argument("embed_sentence: empty sentence");
  const auto& table = store_.value(words_);
  Vec h(config_.embed_dim, 0.0);
  for (TokenId w : sentence) {
    if (w >= config_.vocab_size) throw std::out_of_range("embed_sentence: token outside vocabulary");
    const auto row = table.data().subspan(w * config_.word_dim, config_.word_dim);
    h = gru_.step(store_, h, row);
  }
  return normalized(std::move(h), "embed_sentence");
}

Vec EmbedModel::embed_image(std::span<const double> feature) const {
  return normalized(image_map_.forward(store_, feature), "embed_image");
}

double EmbedModel::reward(std::span<const double> feature, std::span<const TokenId> sentence) const {
  const Vec a = embed_image(feature);
  const Vec b = embed_sentence(sentence);
  return num::kernels::dot(a, b);
}

EmbedModel::Bound EmbedModel::bind(Tape& tape) {
  return {store_.bind(tape, words_), gru_.bind(store_, tape), image_map_.bind(store_, tape)};
}

Var EmbedModel::sentence_var(Tape& tape, const Bound& p, std::span<const TokenId> sentence) const {
  if (sentence.empty()) throw std::invalid_argument("embed_sentence: empty sentence");
  Var h = gru_.zero_state(tape);
  for (TokenId w : sentence) h = gru_.step(tape, p.gru, h, tape.row(p.words, w));
  return tape.l2norm(h);
}

Var EmbedModel::image_var(Tape& tape, const Bound& p, std::span<const double> feature) const {
  Var f = tape.constant(num::Tensor::vector(Vec(feature.begin(), feature.end())));
  return tape.l2norm(image_map_.forward(tape, p.image, f));
}

Var ranking_loss(Tape& tape, std::span<const Var> images, std::span<const Var> sentences,
                 std::span<const std::uint64_t> groups, double margin) {
  const std::size_t n = images.size();
  if (n < 2) throw std::invalid_argument("ranking_loss: batch needs at least 2 pairs");
  if (sentences.size() != n || groups.size() != n)
    throw std::invalid_argument("ranking_loss: images, sentences and groups differ in length");
  std::vector<Var> terms;
  for (std::size_t i = 0; i < n; ++i) {
    Var pos = tape.dot(images[i], sentences[i]);
    Var base = tape.sub(tape.constant(num::Tensor::scalar(margin)), pos);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || groups[j] == groups[i]) continue;
      // image i against negative sentence j, and sentence i against negative image j
      terms.push_back(tape.relu(tape.add(base, tape.dot(images[i], sentences[j]))));
      terms.push_back(tape.relu(tape.add(base, tape.dot(sentences[i], images[j]))));
    }
  }
  if (terms.empty()) return tape.constant(num::Tensor::scalar(0.0));
  return tape.sum(tape.concat(terms));
}

double ranking_loss_value(std::span<const Vec> images, std::span<const Vec> sentences,
                          std::span<const std::uint64_t> groups, double margin) {
  const std::size_t n = images.size();
  if (n < 2) throw std::invalid_argument("ranking_loss: batch needs at least 2 pairs");
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pos = num::kernels::dot(images[i], sentences[i]);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || groups[j] == groups[i]) continue;
      loss += std::max(0.0, margin - pos + num::kernels::dot(images[i], sentences[j]));
      loss += std::max(0.0, margin - pos + num::kernels::dot(sentences[i], images[j]));
    }
  }
  return loss;
}

Var ranking_loss(Tape& tape, EmbedModel& model, const EmbedModel::Bound& p, std::span<const EmbedPair> batch) {
  std::vector<Var> imgs, sents;
  std::vector<std::uint64_t> groups;
  for (const auto& pair : batch) {
    imgs.push_back(model.image_var(tape, p, *pair.feature));
    sents.push_back(model.sentence_var(tape, p, *pair.sentence));
    groups.push_back(pair.group);
  }
  return ranking_loss(tape, imgs, sents, groups, model.config().margin);
}

std::vector<double> train_embedding(EmbedModel& model, std::span<const world::CaptionedExample> train,
                                    const EmbedTrainConfig& config) {
  if (train.size() < 2) throw std::invalid_argument("train_embedding: need at least 2 scenes");
  num::Rng rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> curve;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + 1 < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      if (end - start < 2) break;
      std::vector<EmbedPair> batch;
      for (std::size_t k = start; k < end; ++k) {
        const auto& ex = train[order[k]];
        batch.push_back({&ex.feature, &ex.references[rng.index(ex.references.size())], ex.scene.id});
      }
      Tape tape;
      auto p = model.bind(tape);
      Var loss = tape.scale(ranking_loss(tape, model, p, batch), 1.0 / static_cast<double>(batch.size()));
      tape.backward(loss);
      cells::adam_update(model.store(), {.lr = config.lr});
      total += tape.value(loss).item();
      ++batches;
    }
    curve.push_back(total / static_cast<double>(std::max<std::size_t>(batches, 1)));
  }
  return curve;
}

double heldout_ranking_loss(const EmbedModel& model, std::span<const world::CaptionedExample> examples,
                            std::size_t batch) {
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start + 1 < examples.size(); start += batch) {
    const std::size_t end = std::min(examples.size(), start + batch);
    if (end - start < 2) break;
    std::vector<Vec> imgs, sents;
    std::vector<std::uint64_t> groups;
    for (std::size_t k = start; k < end; ++k) {
      imgs.push_back(model.embed_image(examples[k].feature));
      sents.push_back(model.embed_sentence(examples[k].references.front()));
      groups.push_back(examples[k].scene.id);
    }
    total += ranking_loss_value(imgs, sents, groups, model.config().margin) / static_cast<double>(end - start);
    ++batches;
  }
  return total / static_cast<double>(std::max<std::size_t>(batches, 1));
}

double recall_at_1(const EmbedModel& model, std::span<const world::CaptionedExample> examples) {
  if (examples.empty()) throw std::invalid_argument("recall_at_1: no examples");
  std::vector<Vec> imgs;
  for (const auto& ex : examples) imgs.push_back(model.embed_image(ex.feature));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const Vec s = model.embed_sentence(examples[i].references.front());
    std::size_t best = 0;
    double best_score = -2.0;
    for (std::size_t j = 0; j < imgs.size(); ++j) {
      const double score = num::kernels::dot(s, imgs[j]);
      if (score > best_score) {
        best_score = score;
        best = j;
      }
    }
    if (best == i) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

}  // namespace lacap::embed
