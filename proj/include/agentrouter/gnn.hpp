#pragma once

#include "agentrouter/common.hpp"
#include "agentrouter/graph.hpp"

#include <array>
#include <string>
#include <vector>

namespace agentrouter::gnn {

// Message-passing edge kinds: the five stored kinds plus reversed
// counterparts of the query/agent-touching kinds, so entity and relation
// context reaches both scored endpoints. Incidence edges stay directed.
enum class MessageKind {
  QueryEntity = 0,
  IncSrc = 1,
  IncTgt = 2,
  AgentEntity = 3,
  QueryAgent = 4,
  EntityQuery = 5,
  EntityAgent = 6,
  AgentQuery = 7,
};
inline constexpr int kMessageKindCount = 8;

std::string_view message_kind_name(MessageKind kind);

struct Dims {
  int d_in = 0;
  int d_h = 256;
  int layers = 2;
};

struct ModelParams {
  Dims dims;
  std::vector<std::string> agent_order;

  std::array<Matrix, graph::kNodeKindCount> input_proj;                 // d_h x d_in
  std::vector<std::array<Matrix, kMessageKindCount>> message_weight;    // per layer, d_h x d_h
  std::vector<Vector> gate;                                             // per layer, 8 scalars
  std::vector<std::array<Matrix, graph::kNodeKindCount>> update_weight; // d_h x 2*d_h
  std::vector<std::array<Vector, graph::kNodeKindCount>> update_bias;   // d_h
  Matrix head_w1;  // d_h x 2*d_h
  Vector head_b1;  // d_h
  Matrix head_w2;  // 1 x d_h
  Vector head_b2;  // 1

  /// Same shapes, all entries zero. Used for gradients and optimizer state.
  ModelParams zeros_like() const;
  std::size_t parameter_count() const;
};

/// Visits every parameter tensor as (name, Eigen::Ref<Matrix>), in the fixed
/// checkpoint order. Vectors appear as n x 1 matrices.
template <class Params, class Fn>
void for_each_tensor(Params& params, Fn&& fn) {
  for (int k = 0; k < graph::kNodeKindCount; ++k) {
    fn("proj/" + std::string(graph::node_kind_name(static_cast<graph::NodeKind>(k))),
       params.input_proj[k]);
  }
  for (int l = 0; l < params.dims.layers; ++l) {
    const std::string prefix = "l" + std::to_string(l) + "/";
    for (int m = 0; m < kMessageKindCount; ++m) {
      fn(prefix + "msg/" + std::string(message_kind_name(static_cast<MessageKind>(m))),
         params.message_weight[l][m]);
    }
    fn(prefix + "gate", params.gate[l]);
    for (int k = 0; k < graph::kNodeKindCount; ++k) {
      const std::string kind(graph::node_kind_name(static_cast<graph::NodeKind>(k)));
      fn(prefix + "update_w/" + kind, params.update_weight[l][k]);
      fn(prefix + "update_b/" + kind, params.update_bias[l][k]);
    }
  }
  fn("head/w1", params.head_w1);
  fn("head/b1", params.head_b1);
  fn("head/w2", params.head_w2);
  fn("head/b2", params.head_b2);
}

/// Glorot-uniform matrices, zero biases, gates at 1.0; bit-reproducible for
/// a fixed seed.
ModelParams init_params(std::uint64_t seed, const Dims& dims,
                        std::vector<std::string> agent_order = {});

/// Sorted in-neighbor lists per message kind; built once per pass so that
/// aggregation order is canonical regardless of edge-list order.
struct Adjacency {
  std::array<std::vector<std::vector<int>>, kMessageKindCount> in;
};

Adjacency build_adjacency(const graph::KnowledgeGraph& g);

struct ForwardTrace {
  std::vector<Matrix> hidden;  // layers + 1 entries of d_h x N
  std::vector<std::array<Matrix, kMessageKindCount>> neighbor_mean;  // per layer, d_h x N
  std::vector<Matrix> gated_aggregate;  // per layer, d_h x N
  Matrix head_pre;  // d_h x |A|, scoring MLP pre-activation
  Vector scores;    // |A|
  Vector probs;     // |A|
};

/// One message-passing layer: per-kind mean aggregation, gated sum, and the
/// type-specific gated update with max(0, .).
Matrix message_pass_layer(const graph::KnowledgeGraph& g, const Matrix& h_prev,
                          const ModelParams& params, int layer);

/// Full pass: input projections, `layers` message-passing layers, scoring
/// head over (query, agent) pairs, softmax. Throws NumericError naming the
/// layer when non-finite values appear.
ForwardTrace forward(const graph::KnowledgeGraph& g, const Matrix& features,
                     const ModelParams& params);

/// Numerically stable softmax; rejects empty input.
Vector score_to_distribution(const Vector& scores);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace agentrouter::gnn
