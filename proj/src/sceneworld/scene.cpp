#include "lacap/sceneworld/scene.hpp"

#include <stdexcept>

namespace lacap::world {

namespace {

constexpr std::array<std::string_view, kShapeKinds> kShapeNames = {"ball", "cube",    "cone", "cylinder",
                                                                  "pyramid", "ring", "star", "heart"};
constexpr std::array<std::string_view, kColors> kColorNames = {"red", "blue", "green", "yellow", "purple", "orange"};
constexpr std::array<std::string_view, kSizes> kSizeNames = {"small", "big"};
constexpr std::array<std::string_view, kRelations> kRelationNames = {"none", "left-of", "on", "near"};

template <class E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::string_view, N>& names, std::string_view what) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == s) return static_cast<E>(i);
  throw std::invalid_argument("unknown " + std::string(what) + ": " + std::string(s));
}

constexpr std::uint64_t kObjectCodes = kShapeKinds * kColors * kSizes;

std::uint64_t object_code(const SceneObject& o) {
  return (static_cast<std::uint64_t>(o.shape) * kColors + static_cast<std::uint64_t>(o.color)) * kSizes +
         static_cast<std::uint64_t>(o.size);
}

}  // namespace

std::string_view to_string(ShapeKind s) { return kShapeNames.at(static_cast<std::size_t>(s)); }
std::string_view to_string(Color c) { return kColorNames.at(static_cast<std::size_t>(c)); }
std::string_view to_string(SizeKind s) { return kSizeNames.at(static_cast<std::size_t>(s)); }
std::string_view to_string(Relation r) { return kRelationNames.at(static_cast<std::size_t>(r)); }
ShapeKind parse_shape(std::string_view s) { return parse_enum<ShapeKind>(s, kShapeNames, "shape"); }
Color parse_color(std::string_view s) { return parse_enum<Color>(s, kColorNames, "color"); }
SizeKind parse_size(std::string_view s) { return parse_enum<SizeKind>(s, kSizeNames, "size"); }
Relation parse_relation(std::string_view s) { return parse_enum<Relation>(s, kRelationNames, "relation"); }

void validate(const Scene& scene) {
  if (scene.objects.empty() || scene.objects.size() > kMaxObjects)
    throw std::invalid_argument("scene must hold 1-3 objects, has " + std::to_string(scene.objects.size()));
  const bool single = scene.objects.size() < 2;
  if (single != (scene.relation == Relation::none))
    throw std::invalid_argument("relation must be none iff the scene has fewer than 2 objects");
}

std::uint64_t canonical_id(const Scene& scene) {
  validate(scene);
  // Mixed radix: relation, then object codes; offset by object count so the
  // ranges for 1, 2 and 3 objects never overlap.
  std::uint64_t code = 0;
  for (const auto& o : scene.objects) code = code * kObjectCodes + object_code(o);
  std::uint64_t base = 0;
  std::uint64_t span = kObjectCodes;
  for (std::size_t n = 1; n < scene.objects.size(); ++n) {
    base += n == 1 ? span : span * (kRelations - 1);
    span *= kObjectCodes;
  }
  const std::uint64_t rel = scene.relation == Relation::none ? 0 : static_cast<std::uint64_t>(scene.relation) - 1;
  return base + rel * span + code;
}

std::uint64_t scene_capacity() {
  const std::uint64_t k = kObjectCodes;
  return k + (kRelations - 1) * k * k + (kRelations - 1) * k * k * k;
}

Scene random_scene(num::Rng& rng) {
  Scene s;
  // Object count weights 1:2:2.
  const std::size_t bucket = rng.index(5);
  const std::size_t count = bucket == 0 ? 1 : (bucket <= 2 ? 2 : 3);
  for (std::size_t i = 0; i < count; ++i) {
    SceneObject o;
    o.shape = static_cast<ShapeKind>(rng.index(kShapeKinds));
    o.color = static_cast<Color>(rng.index(kColors));
    o.size = static_cast<SizeKind>(rng.index(kSizes));
    s.objects.push_back(o);
  }
  s.relation = count < 2 ? Relation::none : static_cast<Relation>(1 + rng.index(kRelations - 1));
  s.id = canonical_id(s);
  return s;
}

}  // namespace lacap::world
