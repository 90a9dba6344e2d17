#include "agentrouter/graph.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace agentrouter::graph {

using nlohmann::json;

namespace {

constexpr std::string_view kNodeKindNames[kNodeKindCount] = {"query", "agent", "entity",
                                                             "relation"};
constexpr std::string_view kEdgeKindNames[kEdgeKindCount] = {
    "query_entity", "inc_src", "inc_tgt", "agent_entity", "query_agent"};

}  // namespace

std::string_view node_kind_name(NodeKind kind) { return kNodeKindNames[static_cast<int>(kind)]; }

NodeKind node_kind_from_name(std::string_view name) {
  for (int i = 0; i < kNodeKindCount; ++i) {
    if (kNodeKindNames[i] == name) return static_cast<NodeKind>(i);
  }
  throw DataError("unknown node kind: " + std::string(name));
}

std::string_view edge_kind_name(EdgeKind kind) { return kEdgeKindNames[static_cast<int>(kind)]; }

EdgeKind edge_kind_from_name(std::string_view name) {
  for (int i = 0; i < kEdgeKindCount; ++i) {
    if (kEdgeKindNames[i] == name) return static_cast<EdgeKind>(i);
  }
  throw DataError("unknown edge kind: " + std::string(name));
}

NodeId KnowledgeGraph::add_node(NodeKind kind, std::string text, NodeAux aux) {
  NodeId id = static_cast<NodeId>(nodes.size());
  if (kind == NodeKind::Entity) {
    entity_by_surface_.emplace(to_lower(text), id);
  }
  nodes.push_back({id, kind, std::move(text), std::move(aux)});
  return id;
}

bool KnowledgeGraph::add_edge(NodeId src, EdgeKind kind, NodeId dst) {
  if (src < 0 || dst < 0 || src >= static_cast<NodeId>(nodes.size()) ||
      dst >= static_cast<NodeId>(nodes.size())) {
    throw DataError("edge endpoint out of range");
  }
  if (src == dst) throw DataError("self-loop rejected on node " + std::to_string(src));
  auto key = std::make_tuple(src, static_cast<int>(kind), dst);
  if (!edge_keys_.insert(key).second) return false;
  edges.push_back({src, kind, dst});
  return true;
}

bool KnowledgeGraph::has_edge(NodeId src, EdgeKind kind, NodeId dst) const {
  return edge_keys_.count(std::make_tuple(src, static_cast<int>(kind), dst)) > 0;
}

NodeId KnowledgeGraph::query_node() const {
  for (const auto& n : nodes) {
    if (n.kind == NodeKind::Query) return n.id;
  }
  throw DataError("graph has no query node");
}

std::vector<NodeId> KnowledgeGraph::agent_nodes() const {
  std::vector<NodeId> out;
  for (const auto& n : nodes) {
    if (n.kind == NodeKind::Agent) out.push_back(n.id);
  }
  return out;
}

std::vector<std::string> KnowledgeGraph::agent_order() const {
  std::vector<std::string> out;
  for (const auto& n : nodes) {
    if (n.kind == NodeKind::Agent) out.push_back(n.aux.agent_id);
  }
  return out;
}

int KnowledgeGraph::count_nodes(NodeKind kind) const {
  return static_cast<int>(
      std::count_if(nodes.begin(), nodes.end(), [&](const Node& n) { return n.kind == kind; }));
}

int KnowledgeGraph::count_edges(EdgeKind kind) const {
  return static_cast<int>(
      std::count_if(edges.begin(), edges.end(), [&](const Edge& e) { return e.kind == kind; }));
}

NodeId KnowledgeGraph::find_entity(const std::string& surface) const {
  auto it = entity_by_surface_.find(to_lower(surface));
  return it == entity_by_surface_.end() ? -1 : it->second;
}

void KnowledgeGraph::validate() const {
  for (size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].id != static_cast<NodeId>(i)) throw DataError("node ids must be dense");
  }
  if (count_nodes(NodeKind::Query) != 1) throw DataError("graph must have exactly one query node");
  const int agents = count_nodes(NodeKind::Agent);
  if (agents == 0) throw DataError("graph must have agent nodes");
  if (count_edges(EdgeKind::QueryAgent) != agents) {
    throw DataError("query-agent edges must cover every agent");
  }

  std::set<std::tuple<int, int, int>> keys;
  std::unordered_map<int, int> inc_src_in, inc_tgt_out;
  for (const auto& e : edges) {
    if (e.src == e.dst) throw DataError("self-loop found");
    if (e.src < 0 || e.dst < 0 || e.src >= static_cast<int>(nodes.size()) ||
        e.dst >= static_cast<int>(nodes.size())) {
      throw DataError("edge endpoint out of range");
    }
    if (!keys.insert({e.src, static_cast<int>(e.kind), e.dst}).second) {
      throw DataError("duplicate edge");
    }
    switch (e.kind) {
      case EdgeKind::IncSrc:
        if (nodes[e.src].kind != NodeKind::Entity || nodes[e.dst].kind != NodeKind::Relation) {
          throw DataError("inc:src must run entity -> relation");
        }
        ++inc_src_in[e.dst];
        break;
      case EdgeKind::IncTgt:
        if (nodes[e.src].kind != NodeKind::Relation || nodes[e.dst].kind != NodeKind::Entity) {
          throw DataError("inc:tgt must run relation -> entity");
        }
        ++inc_tgt_out[e.src];
        break;
      case EdgeKind::QueryEntity:
        if (nodes[e.src].kind != NodeKind::Query || nodes[e.dst].kind != NodeKind::Entity) {
          throw DataError("query-entity must run query -> entity");
        }
        break;
      case EdgeKind::AgentEntity:
        if (nodes[e.src].kind != NodeKind::Agent || nodes[e.dst].kind != NodeKind::Entity) {
          throw DataError("agent-entity must run agent -> entity");
        }
        break;
      case EdgeKind::QueryAgent:
        if (nodes[e.src].kind != NodeKind::Query || nodes[e.dst].kind != NodeKind::Agent) {
          throw DataError("query-agent must run query -> agent");
        }
        break;
    }
  }
  for (const auto& n : nodes) {
    if (n.kind != NodeKind::Relation) continue;
    if (inc_src_in[n.id] != 1 || inc_tgt_out[n.id] != 1) {
      throw DataError("relation node " + std::to_string(n.id) +
                      " must have exactly one inc:src in-edge and one inc:tgt out-edge");
    }
  }
}

namespace {

std::set<std::string> alnum_tokens(const std::string& text) {
  std::set<std::string> out;
  for (const auto& tok : whitespace_tokens(text)) {
    std::string cleaned;
    for (char c : tok) {
      if (std::isalnum(static_cast<unsigned char>(c))) cleaned += c;
    }
    if (cleaned.size() > 2) out.insert(cleaned);
  }
  return out;
}

}  // namespace

std::vector<std::string> lexical_entity_ranking(const dataio::DatasetRecord& record,
                                                const std::vector<extract::EntityMention>& mentions,
                                                const dataio::AgentProfile& profile,
                                                std::size_t top) {
  if (mentions.empty()) return {};
  const std::string context = to_lower(record.context);

  std::vector<std::set<std::string>> entity_context_tokens(mentions.size());
  for (size_t m = 0; m < mentions.size(); ++m) {
    for (const auto& span : mentions[m].spans) {
      // pre-extracted inputs may carry spans for a different text
      int s = std::clamp(span.first, 0, static_cast<int>(context.size()));
      int e = std::clamp(span.second, 0, static_cast<int>(context.size()));
      while (s > 0 && context[s - 1] != '.' && context[s - 1] != '!' && context[s - 1] != '?') --s;
      while (e < static_cast<int>(context.size()) && context[e] != '.' && context[e] != '!' &&
             context[e] != '?') {
        ++e;
      }
      auto toks = alnum_tokens(context.substr(s, e - s));
      entity_context_tokens[m].insert(toks.begin(), toks.end());
    }
  }

  std::set<std::string> agent_tokens = alnum_tokens(to_lower(profile.description_text));
  for (const auto& kw : dataio::design_keywords(profile.design)) agent_tokens.insert(kw);

  std::vector<std::pair<int, size_t>> ranked;  // (-overlap, first-occurrence index)
  for (size_t m = 0; m < mentions.size(); ++m) {
    int overlap = 0;
    for (const auto& tok : entity_context_tokens[m]) {
      if (agent_tokens.count(tok)) ++overlap;
    }
    ranked.emplace_back(-overlap, m);
  }
  std::stable_sort(ranked.begin(), ranked.end());

  std::vector<std::string> out;
  for (size_t i = 0; i < std::min(top, mentions.size()); ++i) {
    out.push_back(mentions[ranked[i].second].surface);
  }
  return out;
}

KnowledgeGraph build_graph(const dataio::DatasetRecord& record,
                           const std::vector<extract::EntityMention>& mentions,
                           const std::vector<extract::RelationTriple>& triples,
                           const std::vector<dataio::AgentProfile>& profiles,
                           const AgentEntityMap& agent_entity_map,
                           const std::set<extract::CueCategory>& cues,
                           std::vector<std::string>* warnings) {
  {
    std::set<std::string> ids;
    for (const auto& p : profiles) {
      if (!ids.insert(p.agent_id).second) {
        throw DataError("duplicate agent id: " + p.agent_id);
      }
    }
  }

  KnowledgeGraph g;
  g.record_id = record.id;

  NodeAux query_aux;
  query_aux.cues.assign(cues.begin(), cues.end());
  NodeId query = g.add_node(NodeKind::Query, record.question, query_aux);

  std::vector<NodeId> agent_ids;
  for (const auto& p : profiles) {
    NodeAux aux;
    aux.agent_id = p.agent_id;
    agent_ids.push_back(g.add_node(NodeKind::Agent, p.description_text, aux));
  }

  std::vector<NodeId> entity_ids;
  for (const auto& m : mentions) {
    NodeAux aux;
    aux.frequency = m.frequency;
    aux.mention_kind = m.kind;
    entity_ids.push_back(g.add_node(NodeKind::Entity, m.surface, aux));
  }

  for (const auto& triple : triples) {
    rewire_triple(triple, g);
  }
  g.cached_triples = triples;

  // query-entity: entities whose surface occurs in the question
  for (size_t m = 0; m < mentions.size(); ++m) {
    if (contains_ci(record.question, mentions[m].surface)) {
      g.add_edge(query, EdgeKind::QueryEntity, entity_ids[m]);
    }
  }

  // agent-entity: judge-provided map, lexical fallback when the map is empty
  if (agent_entity_map.empty()) {
    for (size_t a = 0; a < profiles.size(); ++a) {
      for (const auto& surface : lexical_entity_ranking(record, mentions, profiles[a])) {
        g.add_edge(agent_ids[a], EdgeKind::AgentEntity, g.find_entity(surface));
      }
    }
  } else {
    for (size_t a = 0; a < profiles.size(); ++a) {
      auto it = agent_entity_map.find(profiles[a].agent_id);
      if (it == agent_entity_map.end()) continue;
      for (const auto& surface : it->second) {
        NodeId entity = g.find_entity(surface);
        if (entity < 0) {
          if (warnings != nullptr) {
            warnings->push_back("record " + record.id + ": agent " + profiles[a].agent_id +
                                ": entity '" + surface + "' not in graph, edge skipped");
          }
          continue;
        }
        g.add_edge(agent_ids[a], EdgeKind::AgentEntity, entity);
      }
    }
  }

  for (NodeId agent : agent_ids) {
    g.add_edge(query, EdgeKind::QueryAgent, agent);
  }

  g.validate();
  return g;
}

NodeId rewire_triple(const extract::RelationTriple& triple, KnowledgeGraph& g) {
  NodeId head = g.find_entity(triple.head_surface);
  NodeId tail = g.find_entity(triple.tail_surface);
  if (head < 0 || tail < 0) {
    throw DataError("rewire_triple: missing entity node for (" + triple.head_surface + ", " +
                    triple.relation_label + ", " + triple.tail_surface + ")");
  }
  // dedup: one relation node per (head, label, tail)
  for (const auto& e : g.edges) {
    if (e.kind != EdgeKind::IncSrc || e.src != head) continue;
    const Node& rel = g.nodes[e.dst];
    if (rel.text != triple.relation_label) continue;
    if (g.has_edge(e.dst, EdgeKind::IncTgt, tail)) return e.dst;
  }
  NodeId rel = g.add_node(NodeKind::Relation, triple.relation_label);
  g.add_edge(head, EdgeKind::IncSrc, rel);
  g.add_edge(rel, EdgeKind::IncTgt, tail);
  return rel;
}

GraphStats graph_stats(const std::vector<KnowledgeGraph>& graphs) {
  if (graphs.empty()) throw DataError("graph_stats: empty graph list");
  GraphStats stats;
  stats.graph_count = static_cast<int>(graphs.size());
  for (const auto& g : graphs) {
    stats.query_nodes += g.count_nodes(NodeKind::Query);
    stats.agent_nodes += g.count_nodes(NodeKind::Agent);
    stats.entity_nodes += g.count_nodes(NodeKind::Entity) + g.count_nodes(NodeKind::Relation);
    stats.entity_entity_edges += g.count_nodes(NodeKind::Relation);
    stats.agent_entity_edges += g.count_edges(EdgeKind::AgentEntity);
    stats.query_entity_edges += g.count_edges(EdgeKind::QueryEntity);
  }
  const double n = static_cast<double>(graphs.size());
  stats.query_nodes /= n;
  stats.agent_nodes /= n;
  stats.entity_nodes /= n;
  stats.entity_entity_edges /= n;
  stats.agent_entity_edges /= n;
  stats.query_entity_edges /= n;
  return stats;
}

std::string format_stats(const GraphStats& stats) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(2);
  out << "graphs: " << stats.graph_count << '\n';
  out << "avg nodes  query: " << stats.query_nodes << "  agent: " << stats.agent_nodes
      << "  entity(+relation): " << stats.entity_nodes << '\n';
  out << "avg edges  entity-entity: " << stats.entity_entity_edges
      << "  agent-entity: " << stats.agent_entity_edges
      << "  query-entity: " << stats.query_entity_edges << '\n';
  return out.str();
}

std::string to_json(const KnowledgeGraph& g) {
  json j;
  j["record_id"] = g.record_id;
  j["nodes"] = json::array();
  for (const auto& n : g.nodes) {
    json jn;
    jn["id"] = n.id;
    jn["kind"] = std::string(node_kind_name(n.kind));
    jn["text"] = n.text;
    json features = json::object();
    if (n.kind == NodeKind::Entity) {
      features["frequency"] = n.aux.frequency;
      if (n.aux.mention_kind) {
        features["mention"] = std::string(extract::mention_kind_name(*n.aux.mention_kind));
      }
    } else if (n.kind == NodeKind::Query) {
      json cues = json::array();
      for (auto cue : n.aux.cues) cues.push_back(std::string(extract::cue_name(cue)));
      features["cues"] = cues;
    } else if (n.kind == NodeKind::Agent) {
      features["agent_id"] = n.aux.agent_id;
    }
    jn["features"] = features;
    j["nodes"].push_back(jn);
  }
  j["edges"] = json::array();
  for (const auto& e : g.edges) {
    j["edges"].push_back({{"src", e.src}, {"kind", std::string(edge_kind_name(e.kind))},
                          {"dst", e.dst}});
  }
  j["cached_triples"] = json::array();
  for (const auto& t : g.cached_triples) {
    j["cached_triples"].push_back({{"head", t.head_surface},
                                   {"relation", t.relation_label},
                                   {"tail", t.tail_surface},
                                   {"span", {t.provenance_span.first, t.provenance_span.second}}});
  }
  return j.dump();
}

KnowledgeGraph from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw DataError("graph JSON is malformed");
  KnowledgeGraph g;
  g.record_id = j.at("record_id").get<std::string>();
  for (const auto& jn : j.at("nodes")) {
    NodeKind kind = node_kind_from_name(jn.at("kind").get<std::string>());
    NodeAux aux;
    const auto& features = jn.at("features");
    if (kind == NodeKind::Entity) {
      aux.frequency = features.value("frequency", 0);
      if (features.contains("mention")) {
        aux.mention_kind =
            extract::mention_kind_from_name(features.at("mention").get<std::string>());
      }
    } else if (kind == NodeKind::Query) {
      for (const auto& cue : features.value("cues", json::array())) {
        aux.cues.push_back(extract::cue_from_name(cue.get<std::string>()));
      }
    } else if (kind == NodeKind::Agent) {
      aux.agent_id = features.value("agent_id", "");
    }
    NodeId id = g.add_node(kind, jn.at("text").get<std::string>(), aux);
    if (id != jn.at("id").get<NodeId>()) throw DataError("graph JSON: node ids must be dense");
  }
  for (const auto& je : j.at("edges")) {
    g.add_edge(je.at("src").get<NodeId>(),
               edge_kind_from_name(je.at("kind").get<std::string>()),
               je.at("dst").get<NodeId>());
  }
  for (const auto& jt : j.at("cached_triples")) {
    extract::RelationTriple t;
    t.head_surface = jt.at("head").get<std::string>();
    t.relation_label = jt.at("relation").get<std::string>();
    t.tail_surface = jt.at("tail").get<std::string>();
    t.provenance_span = {jt.at("span")[0].get<int>(), jt.at("span")[1].get<int>()};
    g.cached_triples.push_back(std::move(t));
  }
  g.validate();
  return g;
}

void save_graph(const KnowledgeGraph& g, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / (g.record_id + ".graph.json"), to_json(g) + "\n");
}

KnowledgeGraph load_graph(const std::filesystem::path& file) {
  return from_json(read_text_file(file));
}

}  // namespace agentrouter::graph
