// Command-line driver: data generation, the training stages, captioning,
// evaluation, sweeps and gradient checks. Every command writes its artifacts
// and a manifest_<command>.json into the run directory.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lacap/cli/checkpoint.hpp"
#include "lacap/cli/config.hpp"
#include "lacap/cli/gradient_suite.hpp"
#include "lacap/cli/pipeline.hpp"
#include "lacap/decode/decoder.hpp"
#include "lacap/evalkit/ablation.hpp"

#ifndef LACAP_GIT_DESCRIBE
#define LACAP_GIT_DESCRIBE "unknown"
#endif

namespace fs = std::filesystem;
using namespace lacap;
using app::json;

namespace {

constexpr double kGradTolerance = 1e-5;

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  std::optional<std::size_t> beam;
  std::string variant;
  std::vector<std::string> overrides;
  std::string split = "test";
  std::string captions;
  bool trace = false;
  bool greedy = false;
  bool f32 = false;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

app::RunConfig resolve_config(const Options& o) {
  app::RunConfig c = o.config.empty() ? app::RunConfig{} : app::load_config(o.config);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw app::ConfigError("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!o.out.empty()) c.out = o.out;
  if (o.seed) c.seed = *o.seed;
  if (o.lambda) c.decode.lambda = *o.lambda;
  if (o.beam) c.decode.beam = *o.beam;
  c.validate();
  return c;
}

// Artifact layout inside the run directory.
struct RunDir {
  fs::path root;

  fs::path data(const std::string& split) const { return root / "data" / (split + ".jsonl"); }
  fs::path vocab() const { return root / "data" / "vocab.json"; }
  fs::path embed() const { return root / "embed.lacp"; }
  fs::path sl_policy() const { return root / "policy_sl.lacp"; }
  fs::path rl_policy() const { return root / "policy_rl.lacp"; }
  fs::path rl_value() const { return root / "value_rl.lacp"; }
  fs::path raw_value(critic::ValueVariant v) const {
    switch (v) {
      case critic::ValueVariant::full: return root / "value_full.lacp";
      case critic::ValueVariant::hid: return root / "value_hid.lacp";
      case critic::ValueVariant::hid_im: return root / "value_hid_im.lacp";
    }
    return {};
  }
  fs::path manifest(const std::string& command) const { return root / ("manifest_" + command + ".json"); }
};

fs::path require_file(const fs::path& p, const std::string& producer) {
  if (!fs::exists(p)) throw std::runtime_error("missing " + p.string() + "; run '" + producer + "' first");
  return p;
}

world::Dataset load_dataset(const RunDir& dir) {
  const auto vocab = world::read_vocab(require_file(dir.vocab(), "gen-data"));
  if (!(vocab == app::grammar_vocab()))
    throw std::runtime_error(dir.vocab().string() + " does not match this build's caption vocabulary");
  world::Dataset d;
  d.train = world::read_jsonl(require_file(dir.data("train"), "gen-data"), vocab);
  d.val = world::read_jsonl(require_file(dir.data("val"), "gen-data"), vocab);
  d.test = world::read_jsonl(require_file(dir.data("test"), "gen-data"), vocab);
  return d;
}

const std::vector<world::CaptionedExample>& split_of(const world::Dataset& d, const std::string& name) {
  if (name == "train") return d.train;
  if (name == "val") return d.val;
  if (name == "test") return d.test;
  throw UsageError("unknown split '" + name + "' (expected train, val or test)");
}

json curve(const std::vector<double>& v) { return json(v); }

json stage_meta(const std::string& command, const app::RunConfig& c) {
  return {{"stage", command}, {"seed", c.seed}};
}

app::Dtype dtype(const Options& o) { return o.f32 ? app::Dtype::f32 : app::Dtype::f64; }

struct Outcome {
  json metrics = json::object();
  std::vector<fs::path> artifacts;
};

// Optional checkpoints found in the run directory.
struct Loaded {
  std::optional<policy::PolicyNet> sl, rl;
  std::optional<critic::ValueNet> raw, rlv, hid, hid_im;
  std::optional<embed::EmbedModel> embed;

  eval::Checkpoints view() const {
    const auto ptr = [](const auto& o) { return o ? &*o : nullptr; };
    return {ptr(sl), ptr(rl), ptr(raw), ptr(rlv), ptr(hid), ptr(hid_im), ptr(embed)};
  }
};

Loaded load_available(const RunDir& dir) {
  Loaded l;
  if (fs::exists(dir.sl_policy())) l.sl = app::load_policy(dir.sl_policy());
  if (fs::exists(dir.rl_policy())) l.rl = app::load_policy(dir.rl_policy());
  if (fs::exists(dir.raw_value(critic::ValueVariant::full))) l.raw = app::load_value(dir.raw_value(critic::ValueVariant::full));
  if (fs::exists(dir.rl_value())) l.rlv = app::load_value(dir.rl_value());
  if (fs::exists(dir.raw_value(critic::ValueVariant::hid))) l.hid = app::load_value(dir.raw_value(critic::ValueVariant::hid));
  if (fs::exists(dir.raw_value(critic::ValueVariant::hid_im)))
    l.hid_im = app::load_value(dir.raw_value(critic::ValueVariant::hid_im));
  if (fs::exists(dir.embed())) l.embed = app::load_embed(dir.embed());
  return l;
}

std::string missing_hint(const RunDir& dir, const std::string& name) {
  if (name == "sl_policy") return dir.sl_policy().string() + " (pretrain-policy)";
  if (name == "rl_policy") return dir.rl_policy().string() + " (train-rl)";
  if (name == "rl_value") return dir.rl_value().string() + " (train-rl)";
  if (name == "raw_value") return dir.raw_value(critic::ValueVariant::full).string() + " (pretrain-value)";
  if (name == "hid_value") return dir.raw_value(critic::ValueVariant::hid).string() + " (pretrain-value --variant hid-VN)";
  if (name == "hid_im_value")
    return dir.raw_value(critic::ValueVariant::hid_im).string() + " (pretrain-value --variant hid-Im-VN)";
  if (name == "embed") return dir.embed().string() + " (train-embed)";
  return name;
}

std::vector<eval::Variant> parse_variants(const std::string& text, std::vector<eval::Variant> fallback) {
  if (text.empty()) return fallback;
  if (text == "all")
    return {eval::Variant::sl,         eval::Variant::sl_embed, eval::Variant::sl_raw_vn,
            eval::Variant::full_model, eval::Variant::hid_vn,   eval::Variant::hid_im_vn};
  std::vector<eval::Variant> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(eval::parse_variant(item));
  return out;
}

eval::AblationConfig ablation_config(const app::RunConfig& c, eval::Variant v, const Options& o) {
  // value-free variants decode at lambda 1 unless the user insisted otherwise
  const double lambda = eval::uses_value(v) || o.lambda ? c.decode.lambda : 1.0;
  return {v, lambda, c.decode.beam, c.seed, c.decode.max_len};
}

json report_json(const eval::MetricReport& r) {
  return {{"bleu1", r.bleu1}, {"bleu2", r.bleu2},   {"bleu3", r.bleu3},
          {"bleu4", r.bleu4}, {"rougeL", r.rouge_l}, {"mean_reward", r.mean_reward}};
}

// --- commands ---------------------------------------------------------------

Outcome cmd_gen_data(const app::RunConfig& c, const RunDir& dir, const Options&) {
  const auto data = app::generate_data(c);
  fs::create_directories(dir.root / "data");
  const auto& vocab = app::grammar_vocab();
  world::write_jsonl(dir.data("train"), data.train, vocab);
  world::write_jsonl(dir.data("val"), data.val, vocab);
  world::write_jsonl(dir.data("test"), data.test, vocab);
  world::write_vocab(dir.vocab(), vocab);
  return {{{"train", data.train.size()}, {"val", data.val.size()}, {"test", data.test.size()}, {"vocab", vocab.size()}},
          {dir.data("train"), dir.data("val"), dir.data("test"), dir.vocab()}};
}

Outcome cmd_train_embed(const app::RunConfig& c, const RunDir& dir, const Options& o) {
  const auto data = load_dataset(dir);
  const auto st = app::train_embed_stage(c, data);
  app::save_model(dir.embed(), st.model, stage_meta("train-embed", c), dtype(o));
  return {{{"loss_curve", curve(st.loss_curve)}, {"heldout_loss", st.heldout_loss}, {"recall_at_1", st.recall_at_1}},
          {dir.embed()}};
}

Outcome cmd_pretrain_policy(const app::RunConfig& c, const RunDir& dir, const Options& o) {
  const auto data = load_dataset(dir);
  const auto st = app::pretrain_policy_stage(c, data);
  app::save_model(dir.sl_policy(), st.model, stage_meta("pretrain-policy", c), dtype(o));
  return {{{"nll_curve", curve(st.nll_curve)}, {"val_nll", st.val_nll}}, {dir.sl_policy()}};
}

Outcome cmd_pretrain_value(const app::RunConfig& c, const RunDir& dir, const Options& o) {
  const auto variant = o.variant.empty() ? critic::ValueVariant::full : critic::parse_value_variant(o.variant);
  const auto data = load_dataset(dir);
  const auto policy = app::load_policy(require_file(dir.sl_policy(), "pretrain-policy"));
  const auto embed = app::load_embed(require_file(dir.embed(), "train-embed"));
  const auto st = app::pretrain_value_stage(c, data, policy, embed, variant);
  const auto path = dir.raw_value(variant);
  app::save_model(path, st.model, stage_meta("pretrain-value", c), dtype(o));
  return {{{"variant", critic::to_string(variant)},
           {"mse_curve", curve(st.mse_curve)},
           {"val_mse", st.diagnostics.mse},
           {"val_zero_mse", st.diagnostics.zero_mse},
           {"val_spearman_penultimate", st.diagnostics.spearman_penultimate}},
          {path}};
}

Outcome cmd_train_rl(const app::RunConfig& c, const RunDir& dir, const Options& o) {
  const auto variant = o.variant.empty() ? critic::ValueVariant::full : critic::parse_value_variant(o.variant);
  const auto data = load_dataset(dir);
  const auto policy = app::load_policy(require_file(dir.sl_policy(), "pretrain-policy"));
  const auto value = app::load_value(require_file(dir.raw_value(variant), "pretrain-value"));
  const auto embed = app::load_embed(require_file(dir.embed(), "train-embed"));
  const auto st = app::train_rl_stage(c, data, policy, value, embed, [](std::size_t stage) {
    std::cerr << "curriculum stage " << stage << " done\n";
  });
  app::save_model(dir.rl_policy(), st.policy, stage_meta("train-rl", c), dtype(o));
  app::save_model(dir.rl_value(), st.value, stage_meta("train-rl", c), dtype(o));
  const auto log_path = dir.root / "rl_log.csv";
  rl::write_log_csv(log_path, st.curriculum.log);
  json rewards = json::array();
  for (const auto& row : st.curriculum.log) rewards.push_back(row.mean_reward);
  return {{{"value_variant", critic::to_string(variant)}, {"epoch_mean_reward", rewards}},
          {dir.rl_policy(), dir.rl_value(), log_path}};
}

Outcome cmd_caption(const app::RunConfig& c, const RunDir& dir, const Options& o) {
  const auto data = load_dataset(dir);
  const auto& examples = split_of(data, o.split);
  const auto loaded = load_available(dir);
  const auto models = loaded.view();
  const auto variant = parse_variants(o.variant, {eval::Variant::full_model});
  if (variant.size() != 1) throw UsageError("caption takes a single --variant");
  const auto cfg = ablation_config(c, variant.front(), o);
  eval::validate(cfg);

  // Resolve the models the same way the ablation harness does.
  const policy::PolicyNet* policy = nullptr;
  const critic::ValueNet* value = nullptr;
  switch (cfg.variant) {
    case eval::Variant::full_model:
      policy = models.rl_policy;
      value = models.rl_value;
      if (!policy) throw eval::MissingCheckpoint(cfg.variant, "rl_policy");
      if (!value && cfg.lambda < 1.0) throw eval::MissingCheckpoint(cfg.variant, "rl_value");
      break;
    default:
      policy = models.sl_policy;
      if (!policy) throw eval::MissingCheckpoint(cfg.variant, "sl_policy");
      if (cfg.variant == eval::Variant::sl_raw_vn) value = models.raw_value;
      if (cfg.variant == eval::Variant::hid_vn) value = models.hid_value;
      if (cfg.variant == eval::Variant::hid_im_vn) value = models.hid_im_value;
      if (eval::uses_value(cfg.variant) && !value && cfg.lambda < 1.0)
        throw eval::MissingCheckpoint(cfg.variant, cfg.variant == eval::Variant::sl_raw_vn ? "raw_value"
                                                   : cfg.variant == eval::Variant::hid_vn  ? "hid_value"
                                                                                           : "hid_im_value");
      if (cfg.variant == eval::Variant::sl_embed && !models.embed) throw eval::MissingCheckpoint(cfg.variant, "embed");
  }

  const decode::ModelContext ctx(*policy, cfg.lambda < 1.0 ? value : nullptr);
  std::vector<world::Feature> features;
  for (const auto& ex : examples) features.push_back(ex.feature);
  std::vector<decode::DecodeResult> results;
  if (o.greedy) {
    for (const auto& f : features) results.push_back(decode::greedy_decode(decode::ModelScorer(ctx, f), cfg.max_len));
  } else {
    results = decode::decode_batch(ctx, features, {cfg.beam, cfg.lambda, cfg.max_len});
  }

  const fs::path path = o.captions.empty() ? dir.root / "captions.jsonl" : fs::path(o.captions);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const auto& vocab = app::grammar_vocab();
  std::size_t truncated = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    const auto& best = cfg.variant == eval::Variant::sl_embed && !o.greedy && !r.truncated
                           ? decode::embed_rerank(r.ranked, *models.embed, features[i])
                           : r.best();
    truncated += r.truncated;
    json line{{"index", i},
              {"scene_id", examples[i].scene.id},
              {"caption", vocab.join(best.tokens)},
              {"tokens", best.tokens},
              {"score", best.score},
              {"truncated", r.truncated}};
    if (o.trace) {
      json steps = json::array();
      for (std::size_t t = 0; t < best.tokens.size(); ++t)
        steps.push_back({{"word", vocab.token(best.tokens[t])}, {"logp", best.trace[t].logp},
                         {"value", best.trace[t].value}});
      line["trace"] = steps;
    }
    out << line.dump() << '\n';
  }
  return {{{"variant", eval::to_string(cfg.variant)},
           {"decoder", o.greedy ? "greedy" : "beam"},
           {"lambda", cfg.lambda},
           {"beam", cfg.beam},
           {"images", results.size()},
           {"truncated", truncated}},
          {path}};
}

std::vector<eval::AblationRow> run_rows(const RunDir& dir, const std::vector<world::CaptionedExample>& examples,
                                        const std::vector<eval::AblationConfig>& configs) {
  const auto loaded = load_available(dir);
  try {
    return eval::run_ablation(examples, loaded.view(), configs);
  } catch (const eval::MissingCheckpoint& e) {
    throw std::runtime_error(std::string(e.what()) + ": expected " + missing_hint(dir, e.name()));
  }
}

Outcome cmd_evaluate(const app::RunConfig& c, const RunDir& dir, const Options& o) {
  const auto data = load_dataset(dir);
  const auto variants = parse_variants(o.variant, {eval::Variant::sl, eval::Variant::sl_embed,
                                                   eval::Variant::sl_raw_vn, eval::Variant::full_model});
  std::vector<eval::AblationConfig> configs;
  for (auto v : variants) configs.push_back(ablation_config(c, v, o));
  const auto& examples = split_of(data, o.split);
  const auto rows = run_rows(dir, examples, configs);

  const auto csv = dir.root / "report.csv", md = dir.root / "report.md", images = dir.root / "report_images.jsonl";
  eval::write_report_csv(csv, rows);
  eval::write_report_markdown(md, rows);
  std::ofstream per(images);
  const auto& vocab = app::grammar_vocab();
  json metrics = json::object();
  for (const auto& row : rows) {
    metrics[eval::to_string(row.config.variant)] = report_json(row.report);
    for (std::size_t i = 0; i < row.report.per_image.size(); ++i) {
      const auto& img = row.report.per_image[i];
      per << json{{"variant", eval::to_string(row.config.variant)}, {"index", i}, {"scene_id", examples[i].scene.id},
                  {"caption", vocab.join(img.caption)},          {"reward", img.reward},
                  {"rougeL", img.rouge_l},                       {"truncated", img.truncated}}
                 .dump()
          << '\n';
    }
  }
  eval::write_report_markdown(std::cout, rows);
  return {metrics, {csv, md, images}};
}

Outcome cmd_sweep(const app::RunConfig& c, const RunDir& dir, const Options& o) {
  const auto data = load_dataset(dir);
  const auto& examples = split_of(data, o.split);
  const auto variants = parse_variants(o.variant, {eval::Variant::full_model});
  if (variants.size() != 1) throw UsageError("sweep takes a single --variant");
  const auto v = variants.front();
  const auto lambda_rows = eval::uses_value(v) ? run_rows(dir, examples, eval::lambda_grid(v, c.decode.beam, c.seed))
                                               : std::vector<eval::AblationRow>{};
  auto beam_configs = eval::beam_grid(eval::Variant::sl, 1.0, c.seed);
  if (v != eval::Variant::sl) {
    const auto extra = eval::beam_grid(v, eval::uses_value(v) ? c.decode.lambda : 1.0, c.seed);
    beam_configs.insert(beam_configs.end(), extra.begin(), extra.end());
  }
  const auto beam_rows = run_rows(dir, examples, beam_configs);

  const auto lcsv = dir.root / "sweep_lambda.csv", bcsv = dir.root / "sweep_beam.csv", md = dir.root / "sweep.md";
  std::vector<fs::path> artifacts{bcsv, md};
  if (!lambda_rows.empty()) {
    eval::write_report_csv(lcsv, lambda_rows);
    artifacts.push_back(lcsv);
  }
  eval::write_report_csv(bcsv, beam_rows);
  std::ofstream mdo(md);
  if (!lambda_rows.empty()) {
    mdo << "## lambda sweep (" << eval::to_string(v) << ", beam " << c.decode.beam << ")\n\n";
    eval::write_report_markdown(mdo, lambda_rows);
    mdo << '\n';
  }
  mdo << "## beam sweep\n\n";
  eval::write_report_markdown(mdo, beam_rows);

  json metrics{{"variant", eval::to_string(v)}, {"lambda_reward", json::array()}, {"beam_reward", json::array()}};
  for (const auto& r : lambda_rows)
    metrics["lambda_reward"].push_back({{"lambda", r.config.lambda}, {"reward", r.report.mean_reward}});
  for (const auto& r : beam_rows)
    metrics["beam_reward"].push_back(
        {{"variant", eval::to_string(r.config.variant)}, {"beam", r.config.beam}, {"reward", r.report.mean_reward}});
  return {metrics, artifacts};
}

Outcome cmd_gradcheck(const app::RunConfig& c, const RunDir&, const Options&) {
  const auto results = app::run_gradient_suites(20, c.seed);
  json metrics = json::object();
  bool ok = true;
  for (const auto& r : results) {
    std::printf("%-26s max relative error %.3e over %zu seeds\n", r.model.c_str(), r.max_rel_error, r.checks);
    metrics[r.model] = r.max_rel_error;
    ok = ok && r.max_rel_error < kGradTolerance;
  }
  metrics["passed"] = ok;
  if (!ok) std::printf("gradient check FAILED (tolerance %.0e)\n", kGradTolerance);
  return {metrics, {}};
}

void write_manifest(const RunDir& dir, const std::string& command, const app::RunConfig& c, const Outcome& r) {
  json artifacts = json::array();
  for (const auto& a : r.artifacts) artifacts.push_back(fs::relative(a, dir.root).generic_string());
  const json manifest{{"command", command},
                      {"seed", c.seed},
                      {"git_describe", LACAP_GIT_DESCRIBE},
                      {"config", c.entries()},
                      {"metrics", r.metrics},
                      {"artifacts", artifacts}};
  std::ofstream out(dir.manifest(command));
  if (!out) throw std::runtime_error("cannot write " + dir.manifest(command).string());
  out << manifest.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Scene captioning with a policy network, a value network and lookahead beam search"};
  cli.require_subcommand(1);
  Options o;

  using Handler = Outcome (*)(const app::RunConfig&, const RunDir&, const Options&);
  struct Command {
    const char* name;
    const char* help;
    Handler run;
  };
  const std::vector<Command> commands{
      {"gen-data", "generate train/val/test scenes with reference captions", cmd_gen_data},
      {"train-embed", "train the image-sentence embedding used as reward", cmd_train_embed},
      {"pretrain-policy", "cross-entropy pretraining of the policy network", cmd_pretrain_policy},
      {"pretrain-value", "regress the value network on policy rollouts", cmd_pretrain_value},
      {"train-rl", "actor-critic curriculum training", cmd_train_rl},
      {"caption", "caption a split and write JSONL", cmd_caption},
      {"evaluate", "score ablation variants (BLEU, ROUGE-L, reward)", cmd_evaluate},
      {"sweep", "lambda and beam-size sweeps", cmd_sweep},
      {"gradcheck", "finite-difference checks of every model gradient", cmd_gradcheck},
  };

  for (const auto& cmd : commands) {
    auto* sub = cli.add_subcommand(cmd.name, cmd.help);
    sub->add_option("--config", o.config, "key=value config file")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "run directory (default: run.out)");
    sub->add_option("--seed", o.seed, "run seed");
    sub->add_option("--set", o.overrides, "override a config key, e.g. --set rl.delta=3");
    sub->add_flag("--f32", o.f32, "store checkpoint tensors as float32");
    const std::string name = cmd.name;
    if (name == "caption" || name == "evaluate" || name == "sweep") {
      sub->add_option("--lambda", o.lambda, "value mixing weight in [0, 1]");
      sub->add_option("--beam", o.beam, "beam width");
      sub->add_option("--split", o.split, "train, val or test");
    }
    if (name == "caption" || name == "evaluate" || name == "sweep")
      sub->add_option("--variant", o.variant, "SL, SL-Embed, SL-RawVN, Full-model, hid-VN, hid-Im-VN");
    if (name == "pretrain-value" || name == "train-rl")
      sub->add_option("--variant", o.variant, "value network input: full, hid-VN, hid-Im-VN");
    if (name == "caption") {
      sub->add_flag("--trace", o.trace, "include per-step log-probabilities and values");
      sub->add_flag("--greedy", o.greedy, "arg-max decoding instead of beam search");
      sub->add_option("--captions", o.captions, "output path (default: <out>/captions.jsonl)");
    }
  }

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return cli.exit(e);
  }

  const CLI::App* chosen = cli.get_subcommands().front();
  const auto& cmd = *std::find_if(commands.begin(), commands.end(),
                                  [&](const Command& c) { return chosen->get_name() == c.name; });
  try {
    const auto config = resolve_config(o);
    const RunDir dir{config.out};
    fs::create_directories(dir.root);
    const auto outcome = cmd.run(config, dir, o);
    write_manifest(dir, cmd.name, config, outcome);
    if (outcome.metrics.contains("passed") && !outcome.metrics["passed"].get<bool>()) return 1;
    return 0;
  } catch (const app::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
