#pragma once

#include "agentrouter/common.hpp"

#include <optional>
#include <string>
#include <vector>

namespace agentrouter::cli {

/// Flat key=value run configuration with command-line overrides. Unknown
/// keys are rejected; the effective config is echoed into every output
/// directory.
struct RunConfig {
  // data
  std::string dataset_name = "dataset";
  std::string train_file;
  std::string val_file;
  std::string cache_file;
  std::string graphs_dir;
  std::string profiles_file;
  std::string embeddings_file;
  std::string agent_entity_map_file;
  std::string checkpoint_dir;  // in-domain trained checkpoints (seed-<s>/...)

  // split protocol
  int train_count = 500;
  int val_count = 100;
  int test_begin = 100;
  int test_end = 200;

  // embedding
  int d_text = 256;
  std::uint64_t embed_seed = 0;

  // training
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double clip_norm = 1.0;
  double tau = 0.25;
  double eps = 1e-3;
  int epochs = 30;
  int hidden = 256;
  int layers = 2;
  std::vector<std::uint64_t> seeds = {0, 1, 2};

  // routing / evaluation
  int k = 24;
  std::vector<int> k_list = {3, 6, 9, 12, 15, 18, 21, 24};
  bool trust_cache_f1 = false;
  std::string drop_mode = "relative";

  // backend harness
  std::string backend_endpoint = "http://127.0.0.1:8080";
  std::string backend_model_map;  // "backbone=model,backbone=model"
  std::string backend_api_key_env = "AGENTROUTER_API_KEY";
  double backend_temperature = 0.2;
  int backend_max_tokens = 3000;
  int backend_retry_max = 3;
  int backend_backoff_ms = 250;
  int backend_timeout_s = 60;
  int concurrency = 4;
  std::string transcripts_dir;
  int judge_cutoff = 5;
  int sc_samples = 5;
  int reflect_max_revisions = 2;

  static RunConfig load(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);
  /// Sorted `key = value` lines covering every effective setting.
  std::string echo() const;
};

/// runs/<command>-<timestamp> unless an explicit out directory was given.
std::filesystem::path resolve_out_dir(const std::optional<std::string>& out_flag,
                                      const std::string& command);

void cmd_build_graphs(const RunConfig& config, const std::filesystem::path& out_dir);
void cmd_train(const RunConfig& config, const std::filesystem::path& out_dir);
void cmd_eval(const RunConfig& config, const std::filesystem::path& out_dir,
              const std::filesystem::path& checkpoint_dir, int k);
void cmd_sweep_topk(const RunConfig& config, const std::filesystem::path& out_dir,
                    const std::filesystem::path& checkpoint_dir);
void cmd_transfer(const RunConfig& source_config, const std::filesystem::path& source_ckpt_dir,
                  const std::vector<std::string>& target_config_paths,
                  const std::filesystem::path& out_dir);
void cmd_agents_run(const RunConfig& config, const std::filesystem::path& out_dir,
                    bool mock_backend);
void cmd_agents_judge(const RunConfig& config, const std::filesystem::path& out_dir,
                      bool mock_backend);
void cmd_report_variance(const RunConfig& config, const std::filesystem::path& out_dir);

}  // namespace agentrouter::cli
