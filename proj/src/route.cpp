#include "agentrouter/route.hpp"

#include "agentrouter/eval.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace agentrouter::route {

std::vector<SelectedAgent> top_k_clip(const Vector& probs, int k) {
  if (k < 1) throw DataError("top_k_clip: k must be >= 1");
  const int n = static_cast<int>(probs.size());
  if (n == 0) throw DataError("top_k_clip: empty distribution");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (probs[a] != probs[b]) return probs[a] > probs[b];
    return a < b;
  });
  const int take = std::min(k, n);
  double total = 0.0;
  for (int i = 0; i < take; ++i) total += probs[order[i]];
  std::vector<SelectedAgent> selected;
  selected.reserve(take);
  for (int i = 0; i < take; ++i) {
    double w = total > 0.0 ? probs[order[i]] / total : 1.0 / take;
    selected.push_back({order[i], w});
  }
  return selected;
}

VoteResult weighted_vote(const std::vector<std::string>& answers,
                         const std::vector<double>& weights) {
  if (answers.size() != weights.size()) {
    throw DataError("weighted_vote: answers and weights must align");
  }
  struct Group {
    double total = 0.0;
    double max_single = 0.0;
    size_t first_index = 0;
    size_t best_supporter = 0;
  };
  std::map<std::string, Group> groups;
  for (size_t i = 0; i < answers.size(); ++i) {
    if (weights[i] < 0.0) throw DataError("weighted_vote: negative weight");
    std::string key = eval::normalize_answer(answers[i]);
    if (key.empty()) continue;
    auto [it, inserted] = groups.try_emplace(key);
    Group& g = it->second;
    if (inserted) g.first_index = i;
    g.total += weights[i];
    if (weights[i] > g.max_single) {
      g.max_single = weights[i];
      g.best_supporter = i;
    }
  }

  VoteResult result;
  if (groups.empty()) {
    result.empty_winner = true;
    return result;
  }
  const Group* best = nullptr;
  for (const auto& [key, g] : groups) {
    bool wins = best == nullptr || g.total > best->total ||
                (g.total == best->total &&
                 (g.max_single > best->max_single ||
                  (g.max_single == best->max_single && g.first_index < best->first_index)));
    if (wins) best = &g;
  }
  result.winner = answers[best->best_supporter];
  for (const auto& [key, g] : groups) result.tally.emplace_back(key, g.total);
  std::stable_sort(result.tally.begin(), result.tally.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return a.first < b.first;
                   });
  return result;
}

RoutingResult fuse_distribution(const std::string& record_id, const Vector& probs,
                                const std::vector<std::string>& agent_ids,
                                const std::vector<std::string>& answers, int k) {
  if (static_cast<size_t>(probs.size()) != answers.size() ||
      answers.size() != agent_ids.size()) {
    throw DataError("fuse_distribution: misaligned inputs");
  }
  auto selected = top_k_clip(probs, k);
  std::vector<std::string> vote_answers;
  std::vector<double> vote_weights;
  vote_answers.reserve(selected.size());
  for (const auto& s : selected) {
    vote_answers.push_back(answers[s.index]);
    vote_weights.push_back(s.weight);
  }
  auto vote = weighted_vote(vote_answers, vote_weights);

  RoutingResult result;
  result.record_id = record_id;
  result.probs = probs;
  for (const auto& s : selected) result.selected.emplace_back(agent_ids[s.index], s.weight);
  result.fused_answer = vote.winner;
  result.empty_winner = vote.empty_winner;
  result.tally = std::move(vote.tally);
  return result;
}

RoutingResult route_record(const std::string& record_id, const graph::KnowledgeGraph& g,
                           const Matrix& features, const gnn::ModelParams& params,
                           const std::vector<std::string>& answers, int k) {
  auto trace = gnn::forward(g, features, params);
  return fuse_distribution(record_id, trace.probs, g.agent_order(), answers, k);
}

}  // namespace agentrouter::route
