#include "agentrouter/cli.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

using agentrouter::cli::RunConfig;

// 0 success, 2 usage, 3 data error, 4 numeric failure
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct Flags {
  std::string config_path;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> k;
  std::optional<std::string> drop_mode;
  bool trust_cache_f1 = false;
  bool mock_backend = false;
  std::string checkpoint_dir;
  std::string source_dir;
  std::vector<std::string> targets;
};

void add_common(CLI::App* cmd, Flags& flags) {
  cmd->add_option("--config", flags.config_path, "key = value configuration file")->required();
  cmd->add_option("--out", flags.out, "output directory (default: runs/<command>-<timestamp>)");
  cmd->add_option("--seed", flags.seed, "single seed, replaces the configured seed list");
  cmd->add_option("--k", flags.k, "top-k clip size override");
  cmd->add_option("--drop-mode", flags.drop_mode, "relative|absolute transfer drops");
  cmd->add_flag("--trust-cache-f1", flags.trust_cache_f1, "use cached f1 fields when present");
  cmd->add_flag("--mock-backend", flags.mock_backend, "serve completions from the built-in mock");
}

RunConfig load_config(const Flags& flags) {
  RunConfig config = RunConfig::load(flags.config_path);
  if (flags.seed) config.seeds = {*flags.seed};
  if (flags.k) config.k = *flags.k;
  if (flags.drop_mode) config.set("drop_mode", *flags.drop_mode);
  if (flags.trust_cache_f1) config.trust_cache_f1 = true;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"knowledge-graph guided multi-agent QA router"};
  app.require_subcommand(1);

  Flags flags;
  auto* build = app.add_subcommand("build-graphs", "extract and assemble per-record graphs");
  add_common(build, flags);
  auto* train = app.add_subcommand("train", "train the router and checkpoint per seed");
  add_common(train, flags);
  auto* evaluate = app.add_subcommand("eval", "baselines + router report (mean +/- std)");
  add_common(evaluate, flags);
  evaluate->add_option("--checkpoint-dir", flags.checkpoint_dir,
                       "directory with seed-<s>/checkpoint.bin (default: config checkpoint_dir)");
  auto* sweep = app.add_subcommand("sweep-topk", "delta vs full-ensemble k over the k list");
  add_common(sweep, flags);
  sweep->add_option("--checkpoint-dir", flags.checkpoint_dir,
                    "directory with seed-<s>/checkpoint.bin (default: config checkpoint_dir)");
  auto* transfer = app.add_subcommand("transfer", "cross-dataset drop tables");
  add_common(transfer, flags);
  transfer->add_option("--source-dir", flags.source_dir,
                       "source-trained checkpoint directory (default: config checkpoint_dir)");
  transfer->add_option("--target", flags.targets, "target dataset config file (repeatable)")
      ->required();
  auto* agents_cmd = app.add_subcommand("agents", "online harness");
  agents_cmd->require_subcommand(1);
  auto* agents_run = agents_cmd->add_subcommand("run", "fill the agent answer cache");
  add_common(agents_run, flags);
  auto* agents_judge = agents_cmd->add_subcommand("judge", "produce the agent-entity manage map");
  add_common(agents_judge, flags);
  auto* report_cmd = app.add_subcommand("report", "reports over cached answers");
  report_cmd->require_subcommand(1);
  auto* report_variance = report_cmd->add_subcommand("variance", "per-agent F1 spread");
  add_common(report_variance, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    RunConfig config = load_config(flags);
    auto out_for = [&](const std::string& name) {
      auto dir = agentrouter::cli::resolve_out_dir(flags.out, name);
      std::filesystem::create_directories(dir);
      return dir;
    };
    auto checkpoint_dir = [&]() -> std::filesystem::path {
      if (!flags.checkpoint_dir.empty()) return flags.checkpoint_dir;
      if (!config.checkpoint_dir.empty()) return config.checkpoint_dir;
      throw agentrouter::UsageError("no checkpoint directory: pass --checkpoint-dir or set "
                                    "checkpoint_dir in the config");
    };

    if (build->parsed()) {
      agentrouter::cli::cmd_build_graphs(config, out_for("build-graphs"));
    } else if (train->parsed()) {
      agentrouter::cli::cmd_train(config, out_for("train"));
    } else if (evaluate->parsed()) {
      agentrouter::cli::cmd_eval(config, out_for("eval"), checkpoint_dir(), config.k);
    } else if (sweep->parsed()) {
      agentrouter::cli::cmd_sweep_topk(config, out_for("sweep-topk"), checkpoint_dir());
    } else if (transfer->parsed()) {
      std::filesystem::path source_dir =
          !flags.source_dir.empty() ? std::filesystem::path(flags.source_dir) : checkpoint_dir();
      agentrouter::cli::cmd_transfer(config, source_dir, flags.targets, out_for("transfer"));
    } else if (agents_run->parsed()) {
      agentrouter::cli::cmd_agents_run(config, out_for("agents-run"), flags.mock_backend);
    } else if (agents_judge->parsed()) {
      agentrouter::cli::cmd_agents_judge(config, out_for("agents-judge"), flags.mock_backend);
    } else if (report_variance->parsed()) {
      agentrouter::cli::cmd_report_variance(config, out_for("report-variance"));
    }
  } catch (const agentrouter::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const agentrouter::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const agentrouter::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
