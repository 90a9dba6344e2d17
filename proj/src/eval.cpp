#include "agentrouter/eval.hpp"

#include "agentrouter/route.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace agentrouter::eval {

namespace {

bool is_article(std::string_view tok) { return tok == "a" || tok == "an" || tok == "the"; }

std::vector<double> per_record_scores(const std::vector<std::string>& preds,
                                      const std::vector<std::vector<std::string>>& golds,
                                      bool em) {
  std::vector<double> out;
  out.reserve(preds.size());
  for (size_t i = 0; i < preds.size(); ++i) {
    out.push_back(em ? static_cast<double>(exact_match(preds[i], golds[i]))
                     : token_f1(preds[i], golds[i]));
  }
  return out;
}

}  // namespace

std::string normalize_answer(std::string_view s) {
  std::string lowered;
  lowered.reserve(s.size());
  for (char c : s) {
    unsigned char uc = static_cast<unsigned char>(c);
    if (std::ispunct(uc)) continue;
    lowered += static_cast<char>(std::tolower(uc));
  }
  std::string out;
  for (const auto& tok : whitespace_tokens(lowered)) {
    if (is_article(tok)) continue;
    if (!out.empty()) out += ' ';
    out += tok;
  }
  return out;
}

int exact_match(const std::string& pred, const std::vector<std::string>& golds) {
  std::string np = normalize_answer(pred);
  for (const auto& g : golds) {
    if (np == normalize_answer(g)) return 1;
  }
  return 0;
}

double token_f1(const std::string& pred, const std::vector<std::string>& golds) {
  auto pred_tokens = whitespace_tokens(normalize_answer(pred));
  double best = 0.0;
  for (const auto& g : golds) {
    auto gold_tokens = whitespace_tokens(normalize_answer(g));
    double f1 = 0.0;
    if (pred_tokens.empty() && gold_tokens.empty()) {
      f1 = 1.0;
    } else if (pred_tokens.empty() || gold_tokens.empty()) {
      f1 = 0.0;
    } else {
      std::unordered_map<std::string, int> counts;
      for (const auto& t : gold_tokens) ++counts[t];
      int overlap = 0;
      for (const auto& t : pred_tokens) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
          --it->second;
          ++overlap;
        }
      }
      if (overlap > 0) {
        double precision = static_cast<double>(overlap) / pred_tokens.size();
        double recall = static_cast<double>(overlap) / gold_tokens.size();
        f1 = 2.0 * precision * recall / (precision + recall);
      }
    }
    best = std::max(best, f1);
  }
  return best;
}

double mean(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double population_std(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double m = mean(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(xs.size()));
}

MethodRow evaluate_method(const std::string& method, const std::string& dataset,
                          const std::vector<std::vector<std::string>>& per_seed_predictions,
                          const std::vector<std::vector<std::string>>& golds) {
  if (per_seed_predictions.empty()) throw DataError("evaluate_method: no seeds");
  std::vector<double> f1_means;
  std::vector<double> em_means;
  for (const auto& preds : per_seed_predictions) {
    if (preds.size() != golds.size()) {
      throw DataError("evaluate_method: seed has " + std::to_string(preds.size()) +
                      " predictions, expected " + std::to_string(golds.size()));
    }
    f1_means.push_back(100.0 * mean(per_record_scores(preds, golds, false)));
    em_means.push_back(100.0 * mean(per_record_scores(preds, golds, true)));
  }
  MethodRow row;
  row.method = method;
  row.dataset = dataset;
  row.f1_mean = mean(f1_means);
  row.f1_std = population_std(f1_means);
  row.em_mean = mean(em_means);
  row.em_std = population_std(em_means);
  row.seed_count = static_cast<int>(per_seed_predictions.size());
  return row;
}

EvalReport baselines(const BaselineInputs& in) {
  const size_t n_agents = in.agent_ids.size();
  if (n_agents == 0) throw DataError("baselines: empty agent pool");
  EvalReport report;

  auto train_mean_f1 = [&](size_t agent) {
    std::vector<double> scores;
    for (size_t r = 0; r < in.train_answers.size(); ++r) {
      scores.push_back(token_f1(in.train_answers[r][agent], in.train_golds[r]));
    }
    return mean(scores);
  };

  // average: mean over every (record, agent) pair of the test split
  {
    std::vector<double> f1s;
    std::vector<double> ems;
    for (size_t r = 0; r < in.test_answers.size(); ++r) {
      for (size_t a = 0; a < n_agents; ++a) {
        f1s.push_back(token_f1(in.test_answers[r][a], in.test_golds[r]));
        ems.push_back(static_cast<double>(exact_match(in.test_answers[r][a], in.test_golds[r])));
      }
    }
    MethodRow row{"average", in.dataset, 0, 100.0 * mean(f1s), 0.0, 100.0 * mean(ems), 0.0,
                  in.seed_count};
    report.rows.push_back(row);
  }

  // majority_vote: uniform-weight vote over all agents
  {
    std::vector<std::string> preds;
    std::vector<double> uniform(n_agents, 1.0 / static_cast<double>(n_agents));
    for (const auto& answers : in.test_answers) {
      preds.push_back(route::weighted_vote(answers, uniform).winner);
    }
    std::vector<std::vector<std::string>> seeds(in.seed_count, preds);
    report.rows.push_back(evaluate_method("majority_vote", in.dataset, seeds, in.test_golds));
  }

  // best_llm: backbone whose raw design scores best on train, scored on test
  {
    int best_agent = -1;
    double best_score = -1.0;
    for (size_t a = 0; a < n_agents; ++a) {
      if (in.designs[a] != "raw") continue;
      double score = train_mean_f1(a);
      if (score > best_score) {
        best_score = score;
        best_agent = static_cast<int>(a);
      }
    }
    if (best_agent < 0) {
      // no raw design in the pool; fall back to the overall best agent
      for (size_t a = 0; a < n_agents; ++a) {
        double score = train_mean_f1(a);
        if (score > best_score) {
          best_score = score;
          best_agent = static_cast<int>(a);
        }
      }
      report.notes.push_back("best_llm: no raw-design agents, fell back to best agent");
    }
    std::vector<std::string> preds;
    for (const auto& answers : in.test_answers) preds.push_back(answers[best_agent]);
    std::vector<std::vector<std::string>> seeds(in.seed_count, preds);
    auto row = evaluate_method("best_llm", in.dataset, seeds, in.test_golds);
    report.notes.push_back("best_llm selection: " + in.agent_ids[best_agent]);
    report.rows.push_back(row);
  }

  // best_agent: single agent with best train mean, scored on test
  {
    int best_agent = 0;
    double best_score = -1.0;
    for (size_t a = 0; a < n_agents; ++a) {
      double score = train_mean_f1(a);
      if (score > best_score) {
        best_score = score;
        best_agent = static_cast<int>(a);
      }
    }
    std::vector<std::string> preds;
    for (const auto& answers : in.test_answers) preds.push_back(answers[best_agent]);
    std::vector<std::vector<std::string>> seeds(in.seed_count, preds);
    auto row = evaluate_method("best_agent", in.dataset, seeds, in.test_golds);
    report.notes.push_back("best_agent selection: " + in.agent_ids[best_agent]);
    report.rows.push_back(row);
  }

  // oracle: per-record, per-metric max over agents
  {
    std::vector<double> f1s;
    std::vector<double> ems;
    for (size_t r = 0; r < in.test_answers.size(); ++r) {
      double best_f1 = 0.0;
      double best_em = 0.0;
      for (size_t a = 0; a < n_agents; ++a) {
        best_f1 = std::max(best_f1, token_f1(in.test_answers[r][a], in.test_golds[r]));
        best_em = std::max(best_em,
                           static_cast<double>(exact_match(in.test_answers[r][a], in.test_golds[r])));
      }
      f1s.push_back(best_f1);
      ems.push_back(best_em);
    }
    MethodRow row{"oracle", in.dataset, 0, 100.0 * mean(f1s), 0.0, 100.0 * mean(ems), 0.0,
                  in.seed_count};
    report.rows.push_back(row);
  }

  return report;
}

double drop_percent(double m_in, double m_xfer, DropMode mode) {
  if (mode == DropMode::Absolute) return m_in - m_xfer;
  if (m_in == 0.0) return 0.0;
  return 100.0 * (m_in - m_xfer) / m_in;
}

TransferTable transfer_report(const std::string& source, const std::string& target,
                              const std::vector<int>& k_list,
                              const std::vector<std::pair<double, double>>& f1_in_xfer,
                              const std::vector<std::pair<double, double>>& em_in_xfer,
                              DropMode mode) {
  if (f1_in_xfer.size() != k_list.size() || em_in_xfer.size() != k_list.size()) {
    throw DataError("transfer_report: metric lists must match the k list");
  }
  TransferTable table;
  table.source_dataset = source;
  table.target_dataset = target;
  for (size_t i = 0; i < k_list.size(); ++i) {
    table.cells.push_back({k_list[i],
                           drop_percent(f1_in_xfer[i].first, f1_in_xfer[i].second, mode),
                           drop_percent(em_in_xfer[i].first, em_in_xfer[i].second, mode)});
  }
  return table;
}

}  // namespace agentrouter::eval
