#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "lacap/sceneworld/world.hpp"

using namespace lacap;
using namespace lacap::world;

namespace {

Scene make(std::vector<SceneObject> objs, Relation rel) {
  Scene s{0, std::move(objs), rel};
  s.id = canonical_id(s);
  return s;
}

}  // namespace

TEST_CASE("vocabulary: reserved ids and size") {
  CaptionGrammar g;
  const Vocab& v = g.vocab();
  CHECK(v.id("<eos>") == Vocab::kEos);
  CHECK(v.id("<unk>") == Vocab::kUnk);
  CHECK(v.id("<pad>") == Vocab::kPad);
  CHECK(v.size() >= 50);
  CHECK(v.size() <= 80);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(v.id(v.token(static_cast<TokenId>(i))) == i);
}

TEST_CASE("scene validation") {
  CHECK_THROWS(validate(Scene{0, {}, Relation::none}));
  CHECK_THROWS(validate(Scene{0, {{}}, Relation::on}));
  CHECK_THROWS(validate(Scene{0, {{}, {}}, Relation::none}));
  CHECK_NOTHROW(validate(Scene{0, {{}, {}}, Relation::near}));
}

TEST_CASE("canonical ids are unique over a sample") {
  num::Rng rng(1);
  std::set<std::uint64_t> ids;
  std::set<std::vector<double>> codes;
  for (int i = 0; i < 3000; ++i) {
    Scene s = random_scene(rng);
    CHECK(s.id < scene_capacity());
    const bool new_id = ids.insert(s.id).second;
    const bool new_code = codes.insert(SceneEncoder::attribute_code(s)).second;
    CHECK(new_id == new_code);
  }
}

TEST_CASE("generate_dataset: determinism, seed sensitivity, disjoint splits") {
  DatasetConfig c{.seed = 1, .n_train = 500, .n_val = 100, .n_test = 100};
  Dataset a = generate_dataset(c);
  Dataset b = generate_dataset(c);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  c.seed = 2;
  Dataset d = generate_dataset(c);
  CHECK_FALSE(a.train == d.train);

  std::set<std::uint64_t> train, val, test;
  for (const auto& e : a.train) train.insert(e.scene.id);
  for (const auto& e : a.val) val.insert(e.scene.id);
  for (const auto& e : a.test) test.insert(e.scene.id);
  CHECK(train.size() == 500);
  CHECK(val.size() == 100);
  CHECK(test.size() == 100);
  std::vector<std::uint64_t> inter;
  std::set_intersection(train.begin(), train.end(), val.begin(), val.end(), std::back_inserter(inter));
  std::set_intersection(train.begin(), train.end(), test.begin(), test.end(), std::back_inserter(inter));
  std::set_intersection(val.begin(), val.end(), test.begin(), test.end(), std::back_inserter(inter));
  CHECK(inter.empty());

  CHECK_THROWS(generate_dataset({.n_train = 0}));
  CHECK_THROWS(generate_dataset({.n_train = scene_capacity()}));
}

TEST_CASE("encode_scene: deterministic, attribute sensitive, 64-dim") {
  Scene s = make({{ShapeKind::ball, Color::red, SizeKind::small}}, Relation::none);
  Scene t = make({{ShapeKind::ball, Color::blue, SizeKind::small}}, Relation::none);
  const auto fs = encode_scene(s, 3);
  CHECK(fs.size() == 64);
  CHECK(fs == encode_scene(s, 3));
  CHECK(fs != encode_scene(t, 3));
  for (double x : fs) CHECK(std::isfinite(x));
  // Noise option stays deterministic.
  SceneEncoder noisy(3, 64, 0.01);
  CHECK(noisy.encode(s) == noisy.encode(s));
  CHECK(noisy.encode(s) != fs);
}

TEST_CASE("realize_captions: faithful, in vocabulary, terminated, deterministic") {
  CaptionGrammar g;
  Scene s = make({{ShapeKind::ball, Color::red, SizeKind::small}}, Relation::none);
  auto refs = g.realize(s, 5);
  CHECK(refs.size() >= 5);
  for (const auto& r : refs) {
    const auto words = g.vocab().decode(r);
    CHECK(std::find(words.begin(), words.end(), "red") != words.end());
    const bool has_ball = std::count(words.begin(), words.end(), "ball") + std::count(words.begin(), words.end(), "sphere") +
                          std::count(words.begin(), words.end(), "orb");
    CHECK(has_ball);
    CHECK(r.back() == Vocab::kEos);
  }
  Scene copy = s;
  copy.id = 12345;  // ids do not influence the captions
  CHECK(g.realize(copy, 5) == refs);
}

TEST_CASE("every reference parses back to its scene, never contains <unk>") {
  CaptionGrammar g;
  Dataset d = generate_dataset({.seed = 9, .n_train = 300, .n_val = 20, .n_test = 20});
  for (const auto& ex : d.train) {
    std::set<Sentence> distinct(ex.references.begin(), ex.references.end());
    CHECK(distinct.size() == ex.references.size());
    for (const auto& r : ex.references) {
      CHECK(r.size() <= kMaxCaptionLength);
      CHECK(r.back() == Vocab::kEos);
      CHECK(std::count(r.begin(), r.end(), Vocab::kUnk) == 0);
      CHECK(std::count(r.begin(), r.end(), Vocab::kPad) == 0);
      CHECK(consistent(g.parse(r), ex.scene));
    }
  }
}

TEST_CASE("dataset and vocabulary round-trip through files") {
  CaptionGrammar g;
  Dataset d = generate_dataset({.seed = 4, .n_train = 30, .n_val = 5, .n_test = 5});
  const auto dir = std::filesystem::temp_directory_path() / "lacap_world_test";
  std::filesystem::create_directories(dir);
  write_vocab(dir / "vocab.json", g.vocab());
  const Vocab v = read_vocab(dir / "vocab.json");
  CHECK(v == g.vocab());
  write_jsonl(dir / "train.jsonl", d.train, v);
  CHECK(read_jsonl(dir / "train.jsonl", v) == d.train);
  std::filesystem::remove_all(dir);
}
