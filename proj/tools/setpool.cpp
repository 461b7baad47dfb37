// setpool: synthetic set-aggregation experiments driver.
//
//   setpool gen     --config c.cfg --out data.setf [--seed N]
//   setpool train   --config c.cfg [--data data.setf] --out ckpt
//                   [--resume ckpt] [--phase rl|temporal|mlpgr]
//                   [--episodes N] [--metrics m.csv] [--seed N]
//   setpool eval    --checkpoint ckpt [--data data.setf] --out dir
//                   [--protocol verify|closed-id|open-id]
//                   [--baseline meanpool|maxpool|dac|dac-binary]
//                   [--pgr none|pf|ml] [--terminate [--threshold X]]
//   setpool inspect --checkpoint ckpt
//
// Exit codes: 0 ok, 1 config error, 2 data/format error, 3 numeric failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "setpool/errors.hpp"
#include "setpool/pipeline.hpp"

using namespace setpool;

namespace {

FeatureSetCollection load_or_generate(const ExperimentConfig& config,
                                      const std::string& data_flag) {
  if (!data_flag.empty()) return read_features(data_flag);
  if (!config.dataset_path.empty()) return read_features(config.dataset_path);
  return generate(effective_gen_config(config));
}

int cmd_gen(const std::string& config_path, const std::string& out,
            std::optional<std::uint64_t> seed_override) {
  ExperimentConfig config = load_config(config_path);
  if (seed_override) config.seed = *seed_override;
  const FeatureSetCollection collection = generate(effective_gen_config(config));
  write_features(collection, out);
  std::printf("wrote %zu records (%zu sets) to %s\n", collection.records.size(),
              group_sets(collection).size(), out.c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_flag,
              const std::string& out, const std::string& resume, const std::string& phase,
              std::optional<std::uint64_t> episodes_override,
              std::optional<std::uint64_t> seed_override, std::string metrics_path) {
  ExperimentConfig config = load_config(config_path);
  if (seed_override) config.seed = *seed_override;
  if (episodes_override) config.episodes = *episodes_override;
  validate(config);

  const FeatureSetCollection collection = load_or_generate(config, data_flag);

  TrainState state = [&] {
    if (!resume.empty()) {
      Checkpoint ckpt = load_checkpoint(resume);
      // the resumed run keeps its own config except for the episode target
      if (episodes_override) ckpt.config.episodes = *episodes_override;
      return train_state_from_checkpoint(ckpt, collection);
    }
    return init_train_state(config, collection);
  }();

  if (phase == "temporal") {
    if (!state.config.temporal_enabled)
      throw ConfigError("--phase temporal requires temporal.enabled true");
    if (!run_temporal_phase(state, state.config.temporal_train_steps))
      throw ConfigError("--phase temporal: no multi-frame segments in the training split");
  } else if (phase == "mlpgr") {
    run_mlpgr_phase(state, state.config.pgr_train_steps);
  } else if (phase == "rl") {
    if (metrics_path.empty()) metrics_path = out + ".metrics.csv";
    std::ofstream metrics(metrics_path, resume.empty() ? std::ios::trunc : std::ios::app);
    if (!metrics) throw FormatError("cannot open metrics stream: " + metrics_path, 0);
    if (resume.empty()) metrics << "episode,reward,mean_abs_td,mean_kl\n";
    train_episodes(state, state.config.episodes, [&](const MetricsRow& row) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%" PRIu64 ",%.17g,%.17g,%.17g\n", row.episode,
                    row.reward, row.mean_abs_td, row.mean_kl);
      metrics << buf;
      metrics.flush();
    });
  } else {
    throw ConfigError("unknown phase '" + phase + "'");
  }

  save_checkpoint(to_checkpoint(state), out);
  std::printf("checkpoint at episode %" PRIu64 " written to %s\n", state.episode,
              out.c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_flag,
             const std::string& out_dir, const std::string& protocol,
             const std::string& baseline, const std::string& pgr, bool terminate,
             std::optional<double> threshold, std::optional<std::uint64_t> seed_override) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const FeatureSetCollection collection = load_or_generate(ckpt.config, data_flag);

  EvalOptions options;
  options.protocol = protocol.empty() ? ckpt.config.protocol : protocol_from_string(protocol);
  options.baseline = baseline.empty() ? Baseline::kDac : baseline_from_string(baseline);
  options.pgr = pgr.empty() ? ckpt.config.pgr : pgr_mode_from_string(pgr);
  options.use_termination =
      terminate || (ckpt.config.termination == TerminationMode::kSoftmax &&
                    options.protocol == Protocol::kClosedId);
  options.termination_threshold =
      threshold.value_or(ckpt.config.termination_threshold);
  if (terminate && options.protocol == Protocol::kOpenId)
    throw ConfigError("--terminate cannot be combined with open-id evaluation");
  options.grid = ckpt.config.grid;
  options.seed = seed_override.value_or(ckpt.config.seed);

  const EvalResult result = evaluate(ckpt, collection, options);

  std::filesystem::create_directories(out_dir);
  nlohmann::json summary;
  for (const auto& [name, value] : result.summary) summary[name] = value;
  summary["protocol"] = to_string(options.protocol);
  summary["baseline"] = to_string(options.baseline);
  summary["pgr"] = to_string(options.pgr);
  {
    std::ofstream out(out_dir + "/summary.json");
    out << summary.dump(2) << "\n";
  }
  if (!result.roc.empty()) {
    std::ofstream out(out_dir + "/roc.csv");
    out << "threshold,far,tar\n";
    char buf[128];
    for (const RocPoint& p : result.roc) {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", p.threshold, p.far, p.tar);
      out << buf;
    }
  }
  if (!result.cmc_points.empty()) {
    std::ofstream out(out_dir + "/cmc.csv");
    out << "k,cmc\n";
    for (const auto& [k, v] : result.cmc_points) out << k << ',' << v << '\n';
  }
  if (!result.traces.empty()) {
    std::ofstream out(out_dir + "/weights.csv");
    write_weight_traces(out, result.traces);
  }
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_inspect(const std::string& checkpoint_path) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  std::printf("episode          %" PRIu64 "\n", ckpt.episode);
  std::printf("parameters       %zu\n", checkpoint_param_count(ckpt));
  std::printf("replay pool      %zu trajectories\n", ckpt.replay.size());
  std::printf("rng state        %016" PRIx64 " %016" PRIx64 " %016" PRIx64 " %016" PRIx64
              "\n",
              ckpt.rng_state[0], ckpt.rng_state[1], ckpt.rng_state[2], ckpt.rng_state[3]);
  std::printf("--- config ---\n%s", serialize_config(ckpt.config).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dependency-aware attention control over synthetic embedding sets"};
  app.require_subcommand(1);

  std::string config_path, data_flag, out, resume, phase = "rl";
  std::string checkpoint_path, protocol, baseline, pgr;
  std::optional<std::uint64_t> seed_override, episodes_override;
  std::optional<double> threshold;
  std::string metrics_path;
  bool terminate = false;

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("--config", config_path)->required();
  gen->add_option("--out", out)->required();
  gen->add_option("--seed", seed_override);

  auto* train = app.add_subcommand("train", "run a training phase");
  train->add_option("--config", config_path)->required();
  train->add_option("--data", data_flag);
  train->add_option("--out", out)->required();
  train->add_option("--resume", resume);
  train->add_option("--phase", phase)->check(CLI::IsMember({"rl", "temporal", "mlpgr"}));
  train->add_option("--episodes", episodes_override);
  train->add_option("--metrics", metrics_path);
  train->add_option("--seed", seed_override);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint_path)->required();
  eval->add_option("--data", data_flag);
  eval->add_option("--out", out)->required();
  eval->add_option("--protocol", protocol)
      ->check(CLI::IsMember({"verify", "closed-id", "open-id"}));
  eval->add_option("--baseline", baseline)
      ->check(CLI::IsMember({"meanpool", "maxpool", "dac", "dac-binary"}));
  eval->add_option("--pgr", pgr)->check(CLI::IsMember({"none", "pf", "ml"}));
  eval->add_flag("--terminate", terminate);
  eval->add_option("--threshold", threshold);
  eval->add_option("--seed", seed_override);

  auto* inspect = app.add_subcommand("inspect", "print checkpoint facts");
  inspect->add_option("--checkpoint", checkpoint_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(config_path, out, seed_override);
    if (train->parsed())
      return cmd_train(config_path, data_flag, out, resume, phase, episodes_override,
                       seed_override, metrics_path);
    if (eval->parsed())
      return cmd_eval(checkpoint_path, data_flag, out, protocol, baseline, pgr, terminate,
                      threshold, seed_override);
    if (inspect->parsed()) return cmd_inspect(checkpoint_path);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
