#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lacap/cells/param_store.hpp"
#include "lacap/critic/value_net.hpp"
#include "lacap/embedder/embed_model.hpp"
#include "lacap/policy_net/policy.hpp"

namespace lacap::app {

using nlohmann::json;

inline constexpr char kCheckpointMagic[4] = {'L', 'A', 'C', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Dtype { f64, f32 };

/// Layout: "LACP", u32 version, u64 header length, JSON header, then every
/// tensor's values in header order. All integers and floats little-endian.
struct Checkpoint {
  std::string kind;
  json config = json::object();
  json meta = json::object();
  Dtype dtype = Dtype::f64;
  std::vector<std::pair<std::string, num::Tensor>> tensors;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Parameter values of `store` in registration order.
Checkpoint snapshot(const cells::ParamStore& store, std::string kind, json config, Dtype dtype = Dtype::f64);
/// Copies values into `store`; names, order and shapes must match exactly.
void restore(const Checkpoint& checkpoint, cells::ParamStore& store);

json to_json(const embed::EmbedConfig& c);
json to_json(const policy::PolicyConfig& c);
json to_json(const critic::ValueConfig& c);

void save_model(const std::filesystem::path& path, const embed::EmbedModel& m, json meta = json::object(),
                Dtype dtype = Dtype::f64);
void save_model(const std::filesystem::path& path, const policy::PolicyNet& m, json meta = json::object(),
                Dtype dtype = Dtype::f64);
void save_model(const std::filesystem::path& path, const critic::ValueNet& m, json meta = json::object(),
                Dtype dtype = Dtype::f64);

embed::EmbedModel load_embed(const std::filesystem::path& path);
policy::PolicyNet load_policy(const std::filesystem::path& path);
critic::ValueNet load_value(const std::filesystem::path& path);

}  // namespace lacap::app
