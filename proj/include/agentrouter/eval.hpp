#pragma once

#include "agentrouter/common.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace agentrouter::eval {

/// Lowercase, strip punctuation, drop the articles a/an/the, collapse
/// whitespace. Idempotent.
std::string normalize_answer(std::string_view s);

/// 1 iff the normalized prediction equals some normalized gold.
int exact_match(const std::string& pred, const std::vector<std::string>& golds);

/// Token-bag F1 against each gold, max over golds. Both sides empty after
/// normalization scores 1, exactly one empty scores 0.
double token_f1(const std::string& pred, const std::vector<std::string>& golds);

struct MethodRow {
  std::string method;
  std::string dataset;
  int k = 0;                 // 0 when not applicable
  double f1_mean = 0.0;      // percentages
  double f1_std = 0.0;
  double em_mean = 0.0;
  double em_std = 0.0;
  int seed_count = 0;
};

struct EvalReport {
  std::vector<MethodRow> rows;
  std::vector<std::string> notes;
};

/// Per-seed dataset means of EM/F1 (x100), then mean and population std
/// across seeds. Every seed must supply one prediction per record.
MethodRow evaluate_method(const std::string& method, const std::string& dataset,
                          const std::vector<std::vector<std::string>>& per_seed_predictions,
                          const std::vector<std::vector<std::string>>& golds);

double mean(const std::vector<double>& xs);
double population_std(const std::vector<double>& xs);

struct BaselineInputs {
  // Answers aligned to the canonical agent order; empty string = missing.
  std::vector<std::vector<std::string>> train_answers;  // [record][agent]
  std::vector<std::vector<std::string>> train_golds;
  std::vector<std::vector<std::string>> test_answers;
  std::vector<std::vector<std::string>> test_golds;
  std::vector<std::string> agent_ids;   // canonical order
  std::vector<std::string> backbones;   // aligned to agent_ids
  std::vector<std::string> designs;     // aligned to agent_ids
  std::string dataset;
  int seed_count = 1;
};

/// The five heuristic rows: average, majority_vote, best_llm, best_agent,
/// oracle. Selection-based rows pick on the train split and score on test.
EvalReport baselines(const BaselineInputs& inputs);

enum class DropMode { Relative, Absolute };

/// Relative: 100 * (m_in - m_xfer) / m_in. Absolute: m_in - m_xfer points.
double drop_percent(double m_in, double m_xfer, DropMode mode = DropMode::Relative);

struct TransferCell {
  int k = 0;
  double f1_drop = 0.0;
  double em_drop = 0.0;
};

struct TransferTable {
  std::string source_dataset;
  std::string target_dataset;
  std::vector<TransferCell> cells;
};

/// Builds the drop table from matched in-domain and transferred metric pairs,
/// one per k.
TransferTable transfer_report(const std::string& source, const std::string& target,
                              const std::vector<int>& k_list,
                              const std::vector<std::pair<double, double>>& f1_in_xfer,
                              const std::vector<std::pair<double, double>>& em_in_xfer,
                              DropMode mode = DropMode::Relative);

}  // namespace agentrouter::eval
