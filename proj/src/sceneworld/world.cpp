#include "lacap/sceneworld/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

namespace lacap::world {

using json = nlohmann::json;
using Words = std::vector<std::string>;

namespace {

const std::vector<Words>& openers() {
  static const std::vector<Words> v = {
      {}, {"there", "is"}, {"this", "is"}, {"i", "see"}, {"here", "is"}, {"a", "photo", "of"}};
  return v;
}

const std::vector<std::string>& shape_words(ShapeKind s) {
  static const std::vector<std::vector<std::string>> v = {
      {"ball", "sphere", "orb"}, {"cube", "block", "box"}, {"cone"},       {"cylinder", "tube", "can"},
      {"pyramid"},               {"ring", "hoop", "donut"}, {"star"},       {"heart"}};
  return v.at(static_cast<std::size_t>(s));
}

const std::vector<std::string>& size_words(SizeKind s) {
  static const std::vector<std::vector<std::string>> v = {{"small", "little", "tiny"}, {"big", "large", "huge"}};
  return v.at(static_cast<std::size_t>(s));
}

const std::vector<Words>& relation_words(Relation r) {
  static const std::vector<std::vector<Words>> v = {
      {},
      {{"left", "of"}, {"to", "the", "left", "of"}},
      {{"on"}, {"on", "top", "of"}, {"atop"}},
      {{"near"}, {"beside"}, {"next", "to"}, {"by"}}};
  return v.at(static_cast<std::size_t>(r));
}

void append(Words& out, const Words& w) { out.insert(out.end(), w.begin(), w.end()); }

}  // namespace

// ---------------------------------------------------------------- grammar

CaptionGrammar::CaptionGrammar() {
  for (const auto& o : openers())
    for (const auto& w : o) vocab_.add(w);
  vocab_.add("a");
  vocab_.add("and");
  for (std::size_t s = 0; s < kSizes; ++s)
    for (const auto& w : size_words(static_cast<SizeKind>(s))) vocab_.add(w);
  for (std::size_t c = 0; c < kColors; ++c) vocab_.add(to_string(static_cast<Color>(c)));
  for (std::size_t s = 0; s < kShapeKinds; ++s)
    for (const auto& w : shape_words(static_cast<ShapeKind>(s))) vocab_.add(w);
  for (std::size_t r = 1; r < kRelations; ++r)
    for (const auto& form : relation_words(static_cast<Relation>(r)))
      for (const auto& w : form) vocab_.add(w);
}

std::vector<Words> CaptionGrammar::variants(const Scene& scene) const {
  validate(scene);
  const auto& objs = scene.objects;
  // Head noun phrase: "a <size> <color> <shape>".
  std::vector<Words> heads;
  for (const auto& sz : size_words(objs[0].size))
    for (const auto& sh : shape_words(objs[0].shape)) {
      heads.push_back({"a", sz, std::string(to_string(objs[0].color)), sh});
      // Three-object captions are tight on length; allow the bare form.
      if (objs.size() == 3) heads.push_back({sz, std::string(to_string(objs[0].color)), sh});
    }

  std::vector<Words> tails = {{}};
  if (objs.size() >= 2) {
    std::vector<Words> next;
    for (const auto& rel : relation_words(scene.relation))
      for (const auto& sh : shape_words(objs[1].shape)) {
        Words t = rel;
        if (objs.size() == 2) t.push_back("a");
        t.push_back(std::string(to_string(objs[1].color)));
        t.push_back(sh);
        next.push_back(std::move(t));
      }
    tails = std::move(next);
  }
  if (objs.size() == 3) {
    std::vector<Words> next;
    for (const auto& t : tails)
      for (const auto& sh : shape_words(objs[2].shape)) {
        Words u = t;
        u.push_back("and");
        u.push_back(std::string(to_string(objs[2].color)));
        u.push_back(sh);
        next.push_back(std::move(u));
      }
    tails = std::move(next);
  }

  std::vector<Words> out;
  for (const auto& op : openers())
    for (const auto& h : heads)
      for (const auto& t : tails) {
        Words w = op;
        append(w, h);
        append(w, t);
        w.push_back("<eos>");
        if (w.size() <= kMaxCaptionLength) out.push_back(std::move(w));
      }
  return out;
}

std::vector<Sentence> CaptionGrammar::realize(const Scene& scene, std::uint64_t grammar_seed) const {
  auto all = variants(scene);
  if (all.size() < kReferencesPerScene) throw std::logic_error("grammar yields too few variants for a scene");
  Scene key = scene;
  key.id = 0;
  num::Rng rng = num::Rng::derive(grammar_seed, canonical_id(key));
  // Partial Fisher-Yates: the first k slots become a uniform sample.
  std::vector<Sentence> refs;
  for (std::size_t i = 0; i < kReferencesPerScene; ++i) {
    const std::size_t j = i + rng.index(all.size() - i);
    std::swap(all[i], all[j]);
    refs.push_back(vocab_.encode(all[i]));
  }
  return refs;
}

ParsedCaption CaptionGrammar::parse(std::span<const TokenId> caption) const {
  ParsedCaption out;
  std::optional<SizeKind> pending_size;
  std::optional<Color> pending_color;
  for (TokenId id : caption) {
    const std::string& w = vocab_.token(id);
    if (w == "<eos>") break;
    bool matched = false;
    for (std::size_t s = 0; s < kSizes && !matched; ++s) {
      const auto& ws = size_words(static_cast<SizeKind>(s));
      if (std::find(ws.begin(), ws.end(), w) != ws.end()) {
        pending_size = static_cast<SizeKind>(s);
        matched = true;
      }
    }
    for (std::size_t c = 0; c < kColors && !matched; ++c)
      if (to_string(static_cast<Color>(c)) == w) {
        pending_color = static_cast<Color>(c);
        matched = true;
      }
    for (std::size_t s = 0; s < kShapeKinds && !matched; ++s) {
      const auto& ws = shape_words(static_cast<ShapeKind>(s));
      if (std::find(ws.begin(), ws.end(), w) != ws.end()) {
        if (!pending_color) throw std::invalid_argument("parse: shape without color");
        if (out.objects.empty()) out.first_size = pending_size;
        out.objects.push_back({static_cast<ShapeKind>(s), *pending_color});
        pending_color.reset();
        pending_size.reset();
        matched = true;
      }
    }
    if (matched) continue;
    if (w == "left") out.relation = Relation::left_of;
    else if (w == "atop") out.relation = Relation::on;
    else if (w == "on") out.relation = Relation::on;
    else if (w == "near" || w == "beside" || w == "next" || w == "by") out.relation = Relation::near;
  }
  return out;
}

bool consistent(const ParsedCaption& parsed, const Scene& scene) {
  if (parsed.objects.size() != scene.objects.size()) return false;
  for (std::size_t i = 0; i < parsed.objects.size(); ++i)
    if (parsed.objects[i].shape != scene.objects[i].shape || parsed.objects[i].color != scene.objects[i].color)
      return false;
  if (parsed.first_size != scene.objects[0].size) return false;
  return parsed.relation == scene.relation;
}

// ---------------------------------------------------------------- encoder

SceneEncoder::SceneEncoder(std::uint64_t seed, std::size_t dim, double noise_sigma)
    : seed_(seed), dim_(dim), noise_sigma_(noise_sigma), projection_(dim * kCodeDim), bias_(dim) {
  num::Rng rng = num::Rng::derive(seed, 0x5ce7e);
  // A scene activates about ten code entries; scale keeps features O(1).
  const double scale = 1.0 / std::sqrt(10.0);
  for (auto& p : projection_) p = rng.normal() * scale;
  for (auto& b : bias_) b = 0.1 * rng.normal();
}

std::vector<double> SceneEncoder::attribute_code(const Scene& scene) {
  validate(scene);
  std::vector<double> code(kCodeDim, 0.0);
  constexpr std::size_t slot = kShapeKinds + kColors + kSizes;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& o = scene.objects[i];
    code[i * slot + static_cast<std::size_t>(o.shape)] = 1.0;
    code[i * slot + kShapeKinds + static_cast<std::size_t>(o.color)] = 1.0;
    code[i * slot + kShapeKinds + kColors + static_cast<std::size_t>(o.size)] = 1.0;
  }
  code[kMaxObjects * slot + static_cast<std::size_t>(scene.relation)] = 1.0;
  return code;
}

Feature SceneEncoder::encode(const Scene& scene) const {
  const auto code = attribute_code(scene);
  Feature f(dim_);
  for (std::size_t r = 0; r < dim_; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < kCodeDim; ++c) acc += projection_[r * kCodeDim + c] * code[c];
    f[r] = acc + bias_[r];
  }
  if (noise_sigma_ > 0.0) {
    Scene key = scene;
    key.id = 0;
    num::Rng rng = num::Rng::derive(seed_ ^ 0x9e37ULL, canonical_id(key));
    for (auto& x : f) x += noise_sigma_ * rng.normal();
  }
  return f;
}

Feature encode_scene(const Scene& scene, std::uint64_t encoder_seed, std::size_t dim) {
  return SceneEncoder(encoder_seed, dim).encode(scene);
}

std::vector<Sentence> realize_captions(const Scene& scene, std::uint64_t grammar_seed) {
  static const CaptionGrammar grammar;
  return grammar.realize(scene, grammar_seed);
}

// ---------------------------------------------------------------- dataset

std::uint64_t encoder_seed_for(std::uint64_t seed) { return num::mix64(seed ^ 0xe1c0de5ULL); }
std::uint64_t grammar_seed_for(std::uint64_t seed) { return num::mix64(seed ^ 0x9a77a4ULL); }

Dataset generate_dataset(const DatasetConfig& config) {
  if (config.n_train < 1 || config.n_val < 1 || config.n_test < 1)
    throw std::invalid_argument("generate_dataset: every split needs at least one example");
  const std::uint64_t total = config.n_train + config.n_val + config.n_test;
  if (total > scene_capacity())
    throw std::invalid_argument("generate_dataset: " + std::to_string(total) + " scenes requested but only " +
                                std::to_string(scene_capacity()) + " distinct scenes exist");
  num::Rng rng = num::Rng::derive(config.seed, 0xda7a);
  std::unordered_set<std::uint64_t> seen;
  std::vector<Scene> scenes;
  while (scenes.size() < total) {
    Scene s = random_scene(rng);
    if (seen.insert(s.id).second) scenes.push_back(std::move(s));
  }
  const SceneEncoder encoder(encoder_seed_for(config.seed), config.feature_dim, config.noise_sigma);
  const CaptionGrammar grammar;
  const std::uint64_t gseed = grammar_seed_for(config.seed);
  Dataset d;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    CaptionedExample ex{scenes[i], encoder.encode(scenes[i]), grammar.realize(scenes[i], gseed)};
    auto& split = i < config.n_train ? d.train : (i < config.n_train + config.n_val ? d.val : d.test);
    split.push_back(std::move(ex));
  }
  return d;
}

namespace {

json scene_to_json(const Scene& s) {
  json objs = json::array();
  for (const auto& o : s.objects)
    objs.push_back({{"shape", to_string(o.shape)}, {"color", to_string(o.color)}, {"size", to_string(o.size)}});
  return {{"scene_id", s.id}, {"objects", objs}, {"relation", to_string(s.relation)}};
}

Scene scene_from_json(const json& j) {
  Scene s;
  s.id = j.at("scene_id").get<std::uint64_t>();
  for (const auto& o : j.at("objects"))
    s.objects.push_back({parse_shape(o.at("shape").get<std::string>()), parse_color(o.at("color").get<std::string>()),
                         parse_size(o.at("size").get<std::string>())});
  s.relation = parse_relation(j.at("relation").get<std::string>());
  validate(s);
  return s;
}

}  // namespace

void write_jsonl(const std::filesystem::path& path, std::span<const CaptionedExample> examples, const Vocab& vocab) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& ex : examples) {
    json caps = json::array();
    for (const auto& r : ex.references) caps.push_back(vocab.decode(r));
    json line = {{"scene", scene_to_json(ex.scene)}, {"features", ex.feature}, {"captions", caps}};
    out << line.dump() << '\n';
  }
}

std::vector<CaptionedExample> read_jsonl(const std::filesystem::path& path, const Vocab& vocab) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<CaptionedExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      CaptionedExample ex;
      ex.scene = scene_from_json(j.at("scene"));
      ex.feature = j.at("features").get<Feature>();
      for (const auto& c : j.at("captions")) {
        const auto words = c.get<std::vector<std::string>>();
        for (const auto& w : words)
          if (!vocab.contains(w)) throw std::runtime_error("token '" + w + "' not in vocabulary");
        ex.references.push_back(vocab.encode(words));
      }
      out.push_back(std::move(ex));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_vocab(const std::filesystem::path& path, const Vocab& vocab) {
  json j = json::object();
  for (std::size_t i = 0; i < vocab.size(); ++i) j[vocab.token(static_cast<TokenId>(i))] = i;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Vocab read_vocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  const json j = json::parse(in);
  std::vector<std::string> by_id(j.size());
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto id = it.value().get<std::size_t>();
    if (id >= by_id.size() || !by_id[id].empty()) throw std::runtime_error("vocabulary ids are not a bijection");
    by_id[id] = it.key();
  }
  Vocab v;
  for (std::size_t i = 0; i < by_id.size(); ++i) {
    if (v.add(by_id[i]) != i) throw std::runtime_error("reserved vocabulary ids differ from <eos>,<unk>,<pad>");
  }
  return v;
}

}  // namespace lacap::world
