#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lacap/critic/value_net.hpp"
#include "lacap/embedder/embed_model.hpp"
#include "lacap/policy_net/policy.hpp"
#include "lacap/rl/actor_critic.hpp"
#include "lacap/sceneworld/world.hpp"

namespace lacap::app {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataSection {
  std::size_t n_train = 1000;
  std::size_t n_val = 100;
  std::size_t n_test = 100;
  std::size_t feature_dim = world::kDefaultFeatureDim;
  double noise_sigma = 0.0;
};

struct ModelSection {
  std::size_t hidden = 64;  // policy and value LSTMs
  std::size_t word_dim = 32;
  std::size_t embed_dim = 64;
  std::size_t visual_dim = 64;
  std::vector<std::size_t> value_mlp{128, 64};
};

struct TrainSection {
  std::size_t epochs = 10;
  double lr = 1e-3;
  std::size_t batch = 32;
};

struct DecodeSection {
  double lambda = 0.4;
  std::size_t beam = 10;
  std::size_t max_len = world::kMaxCaptionLength;
};

inline rl::RlConfig desk_rl_defaults() {
  rl::RlConfig c;
  c.policy_lr = 3e-4;
  c.value_lr = 3e-4;
  c.full_rl_epochs = 4;
  return c;
}

struct RunConfig {
  std::uint64_t seed = 7;
  std::string out = "runs/default";
  DataSection data;
  ModelSection model;
  TrainSection embed{12, 2e-3, 32};
  double margin = 0.2;
  TrainSection policy{8, 5e-3, 16};
  TrainSection value{30, 2e-3, 32};
  std::size_t value_rollouts_per_scene = 4;
  rl::RlConfig rl = desk_rl_defaults();
  DecodeSection decode;

  /// Throws ConfigError naming the first offending key.
  void validate() const;

  /// Every key with its current value, as "section.key" -> text.
  std::map<std::string, std::string> entries() const;
  /// Sets one "section.key"; throws ConfigError on an unknown key or bad value.
  void set(const std::string& key, const std::string& value);
  /// Flat key=value text with sections, parseable by parse_config.
  std::string to_text() const;
};

/// Applies "key = value" lines on top of the defaults. "[name]" opens a
/// section; '#' starts a comment. Unknown keys are rejected.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Seed for one randomized procedure, derived from the run seed.
enum class SeedUse : std::uint64_t {
  embed_init = 1,
  embed_train,
  policy_init,
  policy_train,
  value_init,
  value_train,
  rl,
  diagnostics,
};
std::uint64_t seed_for(const RunConfig& config, SeedUse use);

world::DatasetConfig dataset_config(const RunConfig& config);
embed::EmbedConfig embed_config(const RunConfig& config, std::size_t vocab_size);
policy::PolicyConfig policy_config(const RunConfig& config, std::size_t vocab_size);
critic::ValueConfig value_config(const RunConfig& config, std::size_t vocab_size, critic::ValueVariant variant);

}  // namespace lacap::app
