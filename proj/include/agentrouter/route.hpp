#pragma once

#include "agentrouter/common.hpp"
#include "agentrouter/gnn.hpp"

#include <string>
#include <vector>

namespace agentrouter::route {

struct SelectedAgent {
  int index = 0;  // canonical agent index
  double weight = 0.0;
};

/// Stable top-k selection sorting by (-p, index), weights renormalized to
/// sum 1. k larger than the pool selects everyone.
std::vector<SelectedAgent> top_k_clip(const Vector& probs, int k);

struct VoteResult {
  std::string winner;
  bool empty_winner = false;  // every answer normalized to the empty string
  // tally over normalized answers, heaviest first (ties by key)
  std::vector<std::pair<std::string, double>> tally;
};

/// Sums weights per normalized answer. Ties break by the higher single
/// supporter weight, then by the earliest agent index; the winner's surface
/// form is its heaviest supporter's answer. Empty normalized answers carry
/// no vote.
VoteResult weighted_vote(const std::vector<std::string>& answers,
                         const std::vector<double>& weights);

struct RoutingResult {
  std::string record_id;
  Vector probs;  // full distribution in canonical agent order
  std::vector<std::pair<std::string, double>> selected;  // (agent_id, weight)
  std::string fused_answer;
  bool empty_winner = false;
  std::vector<std::pair<std::string, double>> tally;
};

/// forward -> softmax -> top-k clip -> weighted vote.
RoutingResult route_record(const std::string& record_id, const graph::KnowledgeGraph& g,
                           const Matrix& features, const gnn::ModelParams& params,
                           const std::vector<std::string>& answers, int k);

/// Clip and vote over a precomputed distribution; route_record's tail half.
RoutingResult fuse_distribution(const std::string& record_id, const Vector& probs,
                                const std::vector<std::string>& agent_ids,
                                const std::vector<std::string>& answers, int k);

}  // namespace agentrouter::route
