#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lacap/sceneworld/scene.hpp"
#include "lacap/sceneworld/vocab.hpp"

namespace lacap::world {

using Feature = std::vector<double>;

inline constexpr std::size_t kMaxCaptionLength = 12;  // tokens, including <eos>
inline constexpr std::size_t kReferencesPerScene = 5;
inline constexpr std::size_t kDefaultFeatureDim = 64;

/// Attributes recovered from a caption by the oracle parser. Only the first
/// object's size is ever verbalized.
struct ParsedCaption {
  struct Object {
    ShapeKind shape;
    Color color;
    friend bool operator==(const Object&, const Object&) = default;
  };
  std::vector<Object> objects;
  std::optional<SizeKind> first_size;
  Relation relation = Relation::none;
};

/// Template grammar with synonym substitution. The vocabulary is fixed by the
/// grammar, so every realized caption is in-vocabulary.
class CaptionGrammar {
 public:
  CaptionGrammar();

  const Vocab& vocab() const noexcept { return vocab_; }
  /// Every faithful word sequence for `scene` that fits the length cap.
  std::vector<std::vector<std::string>> variants(const Scene& scene) const;
  /// kReferencesPerScene distinct references, each ending in <eos>. Depends
  /// only on the scene attributes and `grammar_seed`.
  std::vector<Sentence> realize(const Scene& scene, std::uint64_t grammar_seed) const;
  ParsedCaption parse(std::span<const TokenId> caption) const;

 private:
  Vocab vocab_;
};

/// True when `parsed` agrees with every attribute the grammar verbalizes.
bool consistent(const ParsedCaption& parsed, const Scene& scene);

/// Frozen seeded random projection of a slot-wise one-hot attribute code.
class SceneEncoder {
 public:
  static constexpr std::size_t kCodeDim = kMaxObjects * (kShapeKinds + kColors + kSizes) + kRelations;

  explicit SceneEncoder(std::uint64_t seed, std::size_t dim = kDefaultFeatureDim, double noise_sigma = 0.0);

  std::size_t dim() const noexcept { return dim_; }
  Feature encode(const Scene& scene) const;
  static std::vector<double> attribute_code(const Scene& scene);

 private:
  std::uint64_t seed_;
  std::size_t dim_;
  double noise_sigma_;
  std::vector<double> projection_;  // dim x kCodeDim
  std::vector<double> bias_;
};

Feature encode_scene(const Scene& scene, std::uint64_t encoder_seed, std::size_t dim = kDefaultFeatureDim);
std::vector<Sentence> realize_captions(const Scene& scene, std::uint64_t grammar_seed);

struct CaptionedExample {
  Scene scene;
  Feature feature;
  std::vector<Sentence> references;
  friend bool operator==(const CaptionedExample&, const CaptionedExample&) = default;
};

struct DatasetConfig {
  std::uint64_t seed = 7;
  std::size_t n_train = 500;
  std::size_t n_val = 100;
  std::size_t n_test = 100;
  std::size_t feature_dim = kDefaultFeatureDim;
  double noise_sigma = 0.0;
};

struct Dataset {
  std::vector<CaptionedExample> train;
  std::vector<CaptionedExample> val;
  std::vector<CaptionedExample> test;
};

std::uint64_t encoder_seed_for(std::uint64_t seed);
std::uint64_t grammar_seed_for(std::uint64_t seed);

/// Samples n_train + n_val + n_test distinct scenes and splits them in order.
Dataset generate_dataset(const DatasetConfig& config);

void write_jsonl(const std::filesystem::path& path, std::span<const CaptionedExample> examples, const Vocab& vocab);
std::vector<CaptionedExample> read_jsonl(const std::filesystem::path& path, const Vocab& vocab);
void write_vocab(const std::filesystem::path& path, const Vocab& vocab);
Vocab read_vocab(const std::filesystem::path& path);

}  // namespace lacap::world
