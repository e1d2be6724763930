#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lacap/numcore/rng.hpp"

namespace lacap::world {

enum class ShapeKind : std::uint8_t { ball, cube, cone, cylinder, pyramid, ring, star, heart };
enum class Color : std::uint8_t { red, blue, green, yellow, purple, orange };
enum class SizeKind : std::uint8_t { small, big };
enum class Relation : std::uint8_t { none, left_of, on, near };

inline constexpr std::size_t kShapeKinds = 8;
inline constexpr std::size_t kColors = 6;
inline constexpr std::size_t kSizes = 2;
inline constexpr std::size_t kRelations = 4;
inline constexpr std::size_t kMaxObjects = 3;

std::string_view to_string(ShapeKind s);
std::string_view to_string(Color c);
std::string_view to_string(SizeKind s);
std::string_view to_string(Relation r);
ShapeKind parse_shape(std::string_view s);
Color parse_color(std::string_view s);
SizeKind parse_size(std::string_view s);
Relation parse_relation(std::string_view s);

struct SceneObject {
  ShapeKind shape = ShapeKind::ball;
  Color color = Color::red;
  SizeKind size = SizeKind::small;
  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

/// Symbolic scene: 1-3 objects, and a relation between the first two.
struct Scene {
  std::uint64_t id = 0;
  std::vector<SceneObject> objects;
  Relation relation = Relation::none;
  friend bool operator==(const Scene&, const Scene&) = default;
};

/// Throws std::invalid_argument if object count or relation is inconsistent.
void validate(const Scene& scene);
/// Canonical id: distinct attribute tuples get distinct ids.
std::uint64_t canonical_id(const Scene& scene);
/// Number of distinct valid scenes.
std::uint64_t scene_capacity();
Scene random_scene(num::Rng& rng);

}  // namespace lacap::world
