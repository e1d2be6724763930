#include "lacap/cli/config.hpp"

#include <cerrno>
#include <cmath>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace lacap::app {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  errno = 0;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE)
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string fmt(double x) {
  // shortest text that parses back to the same double
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string fmt(std::size_t x) { return std::to_string(x); }

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_size(key, trim(item)));
  return out;
}

std::string fmt_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

constexpr std::size_t kAllStages = static_cast<std::size_t>(-1);

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class Proj>
Field size_field(const char* key, Proj proj) {
  return {key, [proj](RunConfig& c, const std::string& k, const std::string& v) { proj(c) = to_size(k, v); },
          [proj](const RunConfig& c) { return fmt(proj(c)); }};
}

template <class Proj>
Field real_field(const char* key, Proj proj) {
  return {key, [proj](RunConfig& c, const std::string& k, const std::string& v) { proj(c) = to_double(k, v); },
          [proj](const RunConfig& c) { return fmt(proj(c)); }};
}

template <class Proj>
Field bool_field(const char* key, Proj proj) {
  return {key, [proj](RunConfig& c, const std::string& k, const std::string& v) { proj(c) = to_bool(k, v); },
          [proj](const RunConfig& c) { return std::string(proj(c) ? "true" : "false"); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      {"run.seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = to_u64(k, v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"run.out", [](RunConfig& c, const std::string&, const std::string& v) { c.out = v; },
       [](const RunConfig& c) { return c.out; }},
      size_field("data.n_train", [](auto& c) -> auto& { return c.data.n_train; }),
      size_field("data.n_val", [](auto& c) -> auto& { return c.data.n_val; }),
      size_field("data.n_test", [](auto& c) -> auto& { return c.data.n_test; }),
      size_field("data.feature_dim", [](auto& c) -> auto& { return c.data.feature_dim; }),
      real_field("data.noise_sigma", [](auto& c) -> auto& { return c.data.noise_sigma; }),
      size_field("model.hidden", [](auto& c) -> auto& { return c.model.hidden; }),
      size_field("model.word_dim", [](auto& c) -> auto& { return c.model.word_dim; }),
      size_field("model.embed_dim", [](auto& c) -> auto& { return c.model.embed_dim; }),
      size_field("model.visual_dim", [](auto& c) -> auto& { return c.model.visual_dim; }),
      {"model.value_mlp",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.model.value_mlp = to_list(k, v); },
       [](const RunConfig& c) { return fmt_list(c.model.value_mlp); }},
      size_field("embed.epochs", [](auto& c) -> auto& { return c.embed.epochs; }),
      real_field("embed.lr", [](auto& c) -> auto& { return c.embed.lr; }),
      size_field("embed.batch", [](auto& c) -> auto& { return c.embed.batch; }),
      real_field("embed.margin", [](auto& c) -> auto& { return c.margin; }),
      size_field("policy.epochs", [](auto& c) -> auto& { return c.policy.epochs; }),
      real_field("policy.lr", [](auto& c) -> auto& { return c.policy.lr; }),
      size_field("policy.batch", [](auto& c) -> auto& { return c.policy.batch; }),
      size_field("value.epochs", [](auto& c) -> auto& { return c.value.epochs; }),
      real_field("value.lr", [](auto& c) -> auto& { return c.value.lr; }),
      size_field("value.batch", [](auto& c) -> auto& { return c.value.batch; }),
      size_field("value.rollouts_per_scene", [](auto& c) -> auto& { return c.value_rollouts_per_scene; }),
      real_field("rl.policy_lr", [](auto& c) -> auto& { return c.rl.policy_lr; }),
      real_field("rl.value_lr", [](auto& c) -> auto& { return c.rl.value_lr; }),
      size_field("rl.delta", [](auto& c) -> auto& { return c.rl.delta; }),
      size_field("rl.batch", [](auto& c) -> auto& { return c.rl.batch; }),
      size_field("rl.epochs_per_stage", [](auto& c) -> auto& { return c.rl.epochs_per_stage; }),
      size_field("rl.full_rl_epochs", [](auto& c) -> auto& { return c.rl.full_rl_epochs; }),
      bool_field("rl.value_all_states", [](auto& c) -> auto& { return c.rl.value_all_states; }),
      bool_field("rl.normalize_advantage", [](auto& c) -> auto& { return c.rl.normalize_advantage; }),
      {"rl.max_stages",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.rl.max_stages = v == "all" ? kAllStages : to_size(k, v);
       },
       [](const RunConfig& c) { return c.rl.max_stages == kAllStages ? std::string("all") : fmt(c.rl.max_stages); }},
      real_field("decode.lambda", [](auto& c) -> auto& { return c.decode.lambda; }),
      size_field("decode.beam", [](auto& c) -> auto& { return c.decode.beam; }),
      size_field("decode.max_len", [](auto& c) -> auto& { return c.decode.max_len; }),
  };
  return table;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields())
    if (key == f.key) return f.set(*this, key, value);
  throw ConfigError("unknown config key '" + key + "'");
}

std::map<std::string, std::string> RunConfig::entries() const {
  std::map<std::string, std::string> out;
  for (const auto& f : fields()) out[f.key] = f.get(*this);
  return out;
}

std::string RunConfig::to_text() const {
  std::string text, section;
  for (const auto& f : fields()) {
    const std::string key = f.key;
    const auto dot = key.find('.');
    if (key.substr(0, dot) != section) {
      section = key.substr(0, dot);
      text += (text.empty() ? "[" : "\n[") + section + "]\n";
    }
    text += key.substr(dot + 1) + " = " + f.get(*this) + "\n";
  }
  return text;
}

void RunConfig::validate() const {
  const auto positive = [](const char* key, std::size_t v) {
    if (v == 0) throw ConfigError(std::string(key) + " must be positive");
  };
  const auto rate = [](const char* key, double v) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(key) + " must be a positive number");
  };
  positive("data.n_train", data.n_train);
  positive("data.n_test", data.n_test);
  positive("data.feature_dim", data.feature_dim);
  if (!(data.noise_sigma >= 0.0)) throw ConfigError("data.noise_sigma must be non-negative");
  positive("model.hidden", model.hidden);
  positive("model.word_dim", model.word_dim);
  positive("model.embed_dim", model.embed_dim);
  positive("model.visual_dim", model.visual_dim);
  for (auto w : model.value_mlp) positive("model.value_mlp", w);
  rate("embed.lr", embed.lr);
  rate("policy.lr", policy.lr);
  rate("value.lr", value.lr);
  rate("rl.policy_lr", rl.policy_lr);
  rate("rl.value_lr", rl.value_lr);
  if (embed.batch < 2) throw ConfigError("embed.batch must be at least 2 (in-batch negatives)");
  positive("policy.batch", policy.batch);
  positive("value.batch", value.batch);
  positive("value.rollouts_per_scene", value_rollouts_per_scene);
  positive("rl.delta", rl.delta);
  positive("rl.batch", rl.batch);
  positive("rl.epochs_per_stage", rl.epochs_per_stage);
  if (!(margin > 0.0)) throw ConfigError("embed.margin must be positive");
  if (!(decode.lambda >= 0.0 && decode.lambda <= 1.0)) throw ConfigError("decode.lambda must lie in [0, 1]");
  positive("decode.beam", decode.beam);
  positive("decode.max_len", decode.max_len);
  if (out.empty()) throw ConfigError("run.out must not be empty");
}

RunConfig parse_config(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line, section = "run";
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = "line " + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    try {
      config.set(section + "." + trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ", " + e.what());
  }
}

std::uint64_t seed_for(const RunConfig& config, SeedUse use) {
  return num::mix64(config.seed ^ num::mix64(static_cast<std::uint64_t>(use)));
}

world::DatasetConfig dataset_config(const RunConfig& c) {
  world::DatasetConfig d;
  d.seed = c.seed;
  d.n_train = c.data.n_train;
  d.n_val = c.data.n_val;
  d.n_test = c.data.n_test;
  d.feature_dim = c.data.feature_dim;
  d.noise_sigma = c.data.noise_sigma;
  return d;
}

embed::EmbedConfig embed_config(const RunConfig& c, std::size_t vocab_size) {
  return {vocab_size, c.data.feature_dim, c.model.word_dim, c.model.embed_dim, c.margin};
}

policy::PolicyConfig policy_config(const RunConfig& c, std::size_t vocab_size) {
  return {vocab_size, c.data.feature_dim, c.model.hidden};
}

critic::ValueConfig value_config(const RunConfig& c, std::size_t vocab_size, critic::ValueVariant variant) {
  critic::ValueConfig v;
  v.variant = variant;
  v.vocab_size = vocab_size;
  v.feature_dim = c.data.feature_dim;
  v.visual_dim = c.model.visual_dim;
  v.hidden = c.model.hidden;
  v.policy_hidden = c.model.hidden;
  v.mlp_hidden = c.model.value_mlp;
  return v;
}

}  // namespace lacap::app
