#pragma once

#include "agentrouter/common.hpp"
#include "agentrouter/dataio.hpp"
#include "agentrouter/extract.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace agentrouter::graph {

using NodeId = int;

enum class NodeKind { Query = 0, Agent = 1, Entity = 2, Relation = 3 };
inline constexpr int kNodeKindCount = 4;

std::string_view node_kind_name(NodeKind kind);
NodeKind node_kind_from_name(std::string_view name);

// Stored edge families. IncSrc runs entity -> relation, IncTgt runs
// relation -> entity; QueryAgent edges exist for every (query, agent) pair.
enum class EdgeKind {
  QueryEntity = 0,
  IncSrc = 1,
  IncTgt = 2,
  AgentEntity = 3,
  QueryAgent = 4,
};
inline constexpr int kEdgeKindCount = 5;

std::string_view edge_kind_name(EdgeKind kind);
EdgeKind edge_kind_from_name(std::string_view name);

struct NodeAux {
  int frequency = 0;                                   // entity nodes
  std::optional<extract::MentionKind> mention_kind;    // entity nodes
  std::vector<extract::CueCategory> cues;              // query node
  std::string agent_id;                                // agent nodes

  bool operator==(const NodeAux&) const = default;
};

struct Node {
  NodeId id = 0;
  NodeKind kind = NodeKind::Query;
  std::string text;  // payload used for embedding
  NodeAux aux;

  bool operator==(const Node&) const = default;
};

struct Edge {
  NodeId src = 0;
  EdgeKind kind = EdgeKind::QueryEntity;
  NodeId dst = 0;

  auto operator<=>(const Edge&) const = default;
};

class KnowledgeGraph {
 public:
  std::string record_id;
  std::vector<Node> nodes;  // node id == index
  std::vector<Edge> edges;
  std::vector<extract::RelationTriple> cached_triples;

  NodeId add_node(NodeKind kind, std::string text, NodeAux aux = {});
  /// Returns false (and adds nothing) for duplicate (src, kind, dst) edges;
  /// throws on self-loops or out-of-range ids.
  bool add_edge(NodeId src, EdgeKind kind, NodeId dst);
  bool has_edge(NodeId src, EdgeKind kind, NodeId dst) const;

  NodeId query_node() const;
  std::vector<NodeId> agent_nodes() const;       // ascending id = canonical order
  std::vector<std::string> agent_order() const;  // agent ids in canonical order
  int count_nodes(NodeKind kind) const;
  int count_edges(EdgeKind kind) const;

  /// Entity node lookup by case-insensitive surface.
  NodeId find_entity(const std::string& surface) const;

  /// Throws DataError when any structural invariant is violated.
  void validate() const;

  bool operator==(const KnowledgeGraph&) const = default;

 private:
  std::set<std::tuple<int, int, int>> edge_keys_;
  std::map<std::string, NodeId> entity_by_surface_;
};

using AgentEntityMap = std::map<std::string, std::set<std::string>>;

/// Deterministic stand-in for judge-produced manage edges: entities ranked
/// by token overlap between the agent's description+design keywords and the
/// sentences the entity occurs in, ties by first occurrence. Returns the
/// top-min(top, |mentions|) surfaces.
std::vector<std::string> lexical_entity_ranking(const dataio::DatasetRecord& record,
                                                const std::vector<extract::EntityMention>& mentions,
                                                const dataio::AgentProfile& profile,
                                                std::size_t top = 5);

/// Assembles the per-record graph: query node first, agent nodes in
/// canonical order, one entity node per mention, one relation node per
/// rewired triple. Warnings (skipped manage edges) are appended when a sink
/// is provided.
KnowledgeGraph build_graph(const dataio::DatasetRecord& record,
                           const std::vector<extract::EntityMention>& mentions,
                           const std::vector<extract::RelationTriple>& triples,
                           const std::vector<dataio::AgentProfile>& profiles,
                           const AgentEntityMap& agent_entity_map,
                           const std::set<extract::CueCategory>& cues,
                           std::vector<std::string>* warnings = nullptr);

/// Materializes one triple as a relation node plus its two incidence edges.
/// Re-adding the same triple is a no-op that returns the existing node.
NodeId rewire_triple(const extract::RelationTriple& triple, KnowledgeGraph& g);

struct GraphStats {
  double query_nodes = 0.0;
  double agent_nodes = 0.0;
  double entity_nodes = 0.0;  // entity + relation nodes
  double entity_entity_edges = 0.0;  // counted as rewired triples
  double agent_entity_edges = 0.0;
  double query_entity_edges = 0.0;
  int graph_count = 0;
};

GraphStats graph_stats(const std::vector<KnowledgeGraph>& graphs);
std::string format_stats(const GraphStats& stats);

std::string to_json(const KnowledgeGraph& g);
KnowledgeGraph from_json(const std::string& text);

void save_graph(const KnowledgeGraph& g, const std::filesystem::path& dir);
KnowledgeGraph load_graph(const std::filesystem::path& file);

}  // namespace agentrouter::graph
