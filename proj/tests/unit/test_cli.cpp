#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lacap/cli/checkpoint.hpp"
#include "lacap/cli/config.hpp"
#include "lacap/cli/pipeline.hpp"

using namespace lacap;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "lacap_test_cli";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

policy::PolicyNet small_policy(std::uint64_t seed) {
  return policy::PolicyNet({app::grammar_vocab().size(), 8, 5}, seed);
}

}  // namespace

TEST_CASE("config text round-trips through parse_config") {
  app::RunConfig c;
  c.set("run.seed", "11");
  c.set("model.value_mlp", "32,16,8");
  c.set("decode.lambda", "0.3");
  c.set("rl.max_stages", "3");
  c.set("rl.value_all_states", "false");
  const auto back = app::parse_config(c.to_text());
  CHECK(back.entries() == c.entries());
  CHECK(back.seed == 11);
  CHECK(back.decode.lambda == 0.3);
}

TEST_CASE("config parsing reports unknown keys, bad values and line numbers") {
  CHECK_THROWS_AS(app::parse_config("[run]\nbogus = 1\n"), app::ConfigError);
  CHECK_THROWS_AS(app::parse_config("[decode]\nlambda = 1.5\n"), app::ConfigError);
  CHECK_THROWS_AS(app::parse_config("[decode]\nbeam = zero\n"), app::ConfigError);
  try {
    app::parse_config("# comment\n[data]\nn_train = 10\nthis line is wrong\n");
    FAIL("expected a ConfigError");
  } catch (const app::ConfigError& e) {
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
  app::RunConfig c;
  CHECK_THROWS_AS(c.set("policy.nope", "1"), app::ConfigError);
}

TEST_CASE("keys before a section header belong to run") {
  const auto c = app::parse_config("seed = 3\nout = somewhere\n[policy]\nepochs = 2\n");
  CHECK(c.seed == 3);
  CHECK(c.out == "somewhere");
  CHECK(c.policy.epochs == 2);
}

TEST_CASE("derived seeds differ per use and follow the run seed") {
  app::RunConfig a, b;
  b.seed = a.seed + 1;
  CHECK(app::seed_for(a, app::SeedUse::policy_init) != app::seed_for(a, app::SeedUse::value_init));
  CHECK(app::seed_for(a, app::SeedUse::rl) != app::seed_for(b, app::SeedUse::rl));
  CHECK(app::seed_for(a, app::SeedUse::rl) == app::seed_for(a, app::SeedUse::rl));
}

TEST_CASE("checkpoint round-trip is lossless and bitwise stable") {
  const auto p = small_policy(5);
  const auto path = temp_path("policy.lacp");
  app::save_model(path, p, {{"stage", "test"}});
  const auto back = app::load_policy(path);
  const auto& a = p.store().entries();
  const auto& b = back.store().entries();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(std::ranges::equal(a[i].value.data(), b[i].value.data()));
  }

  const auto again = temp_path("policy_again.lacp");
  app::save_model(again, back, {{"stage", "test"}});
  CHECK(slurp(path) == slurp(again));
  CHECK(app::read_checkpoint(path).meta["stage"] == "test");
}

TEST_CASE("float32 checkpoints round to float precision") {
  const auto p = small_policy(6);
  const auto path = temp_path("policy32.lacp");
  app::save_model(path, p, {}, app::Dtype::f32);
  const auto back = app::load_policy(path);
  const auto& a = p.store().entries();
  const auto& b = back.store().entries();
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].value.size(); ++j)
      CHECK(b[i].value.data()[j] == static_cast<double>(static_cast<float>(a[i].value.data()[j])));
}

TEST_CASE("corrupted or mismatched checkpoints are rejected") {
  const auto p = small_policy(7);
  const auto path = temp_path("policy_bad.lacp");
  app::save_model(path, p);
  const std::string good = slurp(path);

  auto write = [&](const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << bytes;
  };

  std::string versioned = good;
  versioned[4] = static_cast<char>(app::kCheckpointVersion + 1);
  write(versioned);
  CHECK_THROWS_AS(app::read_checkpoint(path), app::CheckpointError);

  std::string magic = good;
  magic[0] = 'X';
  write(magic);
  CHECK_THROWS_AS(app::read_checkpoint(path), app::CheckpointError);

  write(good.substr(0, good.size() - 3));
  CHECK_THROWS_AS(app::read_checkpoint(path), app::CheckpointError);

  write(good + "x");
  CHECK_THROWS_AS(app::read_checkpoint(path), app::CheckpointError);

  write(good);
  CHECK_THROWS_AS(app::load_value(path), app::CheckpointError);
  CHECK_THROWS_AS(app::load_embed(path), app::CheckpointError);
  CHECK_NOTHROW(app::load_policy(path));
}

TEST_CASE("restore rejects a store with a different layout") {
  const auto ck = app::snapshot(small_policy(8).store(), "policy", app::json::object());
  auto wider = policy::PolicyNet({app::grammar_vocab().size(), 8, 6}, 8);
  CHECK_THROWS_AS(app::restore(ck, wider.store()), app::CheckpointError);
  auto same = small_policy(9);
  CHECK_NOTHROW(app::restore(ck, same.store()));
  CHECK(std::ranges::equal(same.store().entries().front().value.data(),
                           small_policy(8).store().entries().front().value.data()));
}
