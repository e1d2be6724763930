#include "lacap/cli/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace lacap::app {

namespace {

template <class U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes;
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  out.write(bytes.data(), bytes.size());
}

template <class U>
U get_le(std::istream& in, const std::string& what) {
  std::array<unsigned char, sizeof(U)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size()))
    throw CheckpointError("truncated checkpoint while reading " + what);
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

const char* dtype_name(Dtype d) { return d == Dtype::f64 ? "f64" : "f32"; }

Dtype parse_dtype(const std::string& s) {
  if (s == "f64") return Dtype::f64;
  if (s == "f32") return Dtype::f32;
  throw CheckpointError("unknown dtype '" + s + "'");
}

Checkpoint expect_kind(Checkpoint c, const std::string& kind, const std::filesystem::path& path) {
  if (c.kind != kind)
    throw CheckpointError(path.string() + " holds a '" + c.kind + "' model, expected '" + kind + "'");
  return c;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  json header;
  header["kind"] = c.kind;
  header["dtype"] = dtype_name(c.dtype);
  header["config"] = c.config;
  header["meta"] = c.meta;
  header["tensors"] = json::array();
  for (const auto& [name, t] : c.tensors) header["tensors"].push_back({{"name", name}, {"shape", t.shape()}});
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : c.tensors)
    for (double x : t.data()) {
      if (c.dtype == Dtype::f64)
        put_le(out, std::bit_cast<std::uint64_t>(x));
      else
        put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
    }
  if (!out) throw CheckpointError("write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw CheckpointError(path.string() + " is not a LACP checkpoint");
  const auto version = get_le<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion)
    throw CheckpointError(path.string() + " has format version " + std::to_string(version) + ", this build reads " +
                          std::to_string(kCheckpointVersion));
  const auto length = get_le<std::uint64_t>(in, "header length");
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length))) throw CheckpointError("truncated header");

  Checkpoint c;
  try {
    const json header = json::parse(text);
    c.kind = header.at("kind").get<std::string>();
    c.dtype = parse_dtype(header.at("dtype").get<std::string>());
    c.config = header.at("config");
    c.meta = header.value("meta", json::object());
    for (const auto& t : header.at("tensors"))
      c.tensors.emplace_back(t.at("name").get<std::string>(), num::Tensor(t.at("shape").get<num::Shape>()));
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": malformed header: " + e.what());
  }
  for (auto& [name, t] : c.tensors)
    for (double& x : t.data())
      x = c.dtype == Dtype::f64 ? std::bit_cast<double>(get_le<std::uint64_t>(in, name))
                                : static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(in, name)));
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError(path.string() + ": trailing bytes");
  return c;
}

Checkpoint snapshot(const cells::ParamStore& store, std::string kind, json config, Dtype dtype) {
  Checkpoint c{std::move(kind), std::move(config), json::object(), dtype, {}};
  for (const auto& e : store.entries()) c.tensors.emplace_back(e.name, e.value);
  return c;
}

void restore(const Checkpoint& c, cells::ParamStore& store) {
  if (c.tensors.size() != store.size())
    throw CheckpointError("checkpoint has " + std::to_string(c.tensors.size()) + " tensors, model expects " +
                          std::to_string(store.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& [name, t] = c.tensors[i];
    const auto& e = store.entry(i);
    if (name != e.name) throw CheckpointError("tensor " + std::to_string(i) + " is '" + name + "', expected '" + e.name + "'");
    if (t.shape() != e.value.shape())
      throw CheckpointError("tensor '" + name + "' has shape " + num::shape_string(t.shape()) + ", expected " +
                            num::shape_string(e.value.shape()));
  }
  for (std::size_t i = 0; i < store.size(); ++i) store.mutable_value(i) = c.tensors[i].second;
}

json to_json(const embed::EmbedConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"feature_dim", c.feature_dim}, {"word_dim", c.word_dim},
          {"embed_dim", c.embed_dim},   {"margin", c.margin}};
}

json to_json(const policy::PolicyConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"feature_dim", c.feature_dim}, {"hidden", c.hidden}};
}

json to_json(const critic::ValueConfig& c) {
  return {{"variant", critic::to_string(c.variant)},
          {"vocab_size", c.vocab_size},
          {"feature_dim", c.feature_dim},
          {"visual_dim", c.visual_dim},
          {"hidden", c.hidden},
          {"policy_hidden", c.policy_hidden},
          {"mlp_hidden", c.mlp_hidden}};
}

void save_model(const std::filesystem::path& path, const embed::EmbedModel& m, json meta, Dtype dtype) {
  auto c = snapshot(m.store(), "embed", to_json(m.config()), dtype);
  c.meta = std::move(meta);
  write_checkpoint(path, c);
}

void save_model(const std::filesystem::path& path, const policy::PolicyNet& m, json meta, Dtype dtype) {
  auto c = snapshot(m.store(), "policy", to_json(m.config()), dtype);
  c.meta = std::move(meta);
  write_checkpoint(path, c);
}

void save_model(const std::filesystem::path& path, const critic::ValueNet& m, json meta, Dtype dtype) {
  auto c = snapshot(m.store(), "value", to_json(m.config()), dtype);
  c.meta = std::move(meta);
  write_checkpoint(path, c);
}

embed::EmbedModel load_embed(const std::filesystem::path& path) {
  const auto c = expect_kind(read_checkpoint(path), "embed", path);
  try {
    embed::EmbedConfig cfg;
    cfg.vocab_size = c.config.at("vocab_size");
    cfg.feature_dim = c.config.at("feature_dim");
    cfg.word_dim = c.config.at("word_dim");
    cfg.embed_dim = c.config.at("embed_dim");
    cfg.margin = c.config.at("margin");
    embed::EmbedModel m(cfg, 0);
    restore(c, m.store());
    return m;
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": bad model config: " + e.what());
  }
}

policy::PolicyNet load_policy(const std::filesystem::path& path) {
  const auto c = expect_kind(read_checkpoint(path), "policy", path);
  try {
    policy::PolicyConfig cfg;
    cfg.vocab_size = c.config.at("vocab_size");
    cfg.feature_dim = c.config.at("feature_dim");
    cfg.hidden = c.config.at("hidden");
    policy::PolicyNet m(cfg, 0);
    restore(c, m.store());
    return m;
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": bad model config: " + e.what());
  }
}

critic::ValueNet load_value(const std::filesystem::path& path) {
  const auto c = expect_kind(read_checkpoint(path), "value", path);
  try {
    critic::ValueConfig cfg;
    cfg.variant = critic::parse_value_variant(c.config.at("variant").get<std::string>());
    cfg.vocab_size = c.config.at("vocab_size");
    cfg.feature_dim = c.config.at("feature_dim");
    cfg.visual_dim = c.config.at("visual_dim");
    cfg.hidden = c.config.at("hidden");
    cfg.policy_hidden = c.config.at("policy_hidden");
    cfg.mlp_hidden = c.config.at("mlp_hidden").get<std::vector<std::size_t>>();
    critic::ValueNet m(cfg, 0);
    restore(c, m.store());
    return m;
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": bad model config: " + e.what());
  }
}

}  // namespace lacap::app
