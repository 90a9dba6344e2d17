#pragma once

#include "agentrouter/dataio.hpp"
#include "agentrouter/embed.hpp"
#include "agentrouter/extract.hpp"
#include "agentrouter/graph.hpp"

#include <random>
#include <string>
#include <vector>

namespace testsupport {

using namespace agentrouter;

inline std::vector<dataio::AgentProfile> tiny_profiles(int count) {
  static const AgentDesign kDesigns[] = {AgentDesign::Raw,          AgentDesign::Cot,
                                         AgentDesign::Sc,           AgentDesign::ReactReflect,
                                         AgentDesign::Mad,          AgentDesign::Summary};
  std::vector<dataio::AgentProfile> profiles;
  for (int i = 0; i < count; ++i) {
    dataio::AgentProfile p;
    p.backbone = "toy_model_" + std::to_string(i / 6);
    p.design = kDesigns[i % 6];
    p.agent_id = dataio::make_agent_id(p.backbone, p.design);
    p.description_text = "Test agent " + std::to_string(i) + " answering with design " +
                         std::string(design_name(p.design)) + ".";
    profiles.push_back(std::move(p));
  }
  dataio::sort_canonical(profiles);
  return profiles;
}

inline extract::EntityMention mention(const std::string& surface, extract::MentionKind kind,
                                      int frequency, int offset) {
  extract::EntityMention m;
  m.surface = surface;
  m.kind = kind;
  m.frequency = frequency;
  for (int i = 0; i < frequency; ++i) {
    m.spans.emplace_back(offset + 40 * i, offset + 40 * i + static_cast<int>(surface.size()));
  }
  return m;
}

// The gradient-check fixture: 1 query, 2 agents, 3 entities, 1 relation node.
struct GradcheckFixture {
  dataio::DatasetRecord record;
  std::vector<dataio::AgentProfile> profiles;
  graph::KnowledgeGraph graph;
  Matrix features;
};

inline GradcheckFixture gradcheck_fixture(int d_text = 24) {
  GradcheckFixture fx;
  fx.record.id = "fixture-0";
  fx.record.question = "Who raised Alpha Stone?";
  fx.record.context =
      "Alpha Stone stands near Beta Ridge. Alpha Stone was raised by Mason Gray in 1942.";
  fx.record.gold_answers = {"Mason Gray"};
  fx.record.source_dataset = "fixture";
  fx.profiles = tiny_profiles(2);

  std::vector<extract::EntityMention> mentions = {
      mention("Alpha Stone", extract::MentionKind::Named, 2, 0),
      mention("Beta Ridge", extract::MentionKind::Named, 1, 24),
      mention("1942", extract::MentionKind::Temporal, 1, 80),
  };
  std::vector<extract::RelationTriple> triples = {
      {"Alpha Stone", "prep:near", "Beta Ridge", {0, 34}},
  };
  graph::AgentEntityMap manage;
  manage[fx.profiles[0].agent_id] = {"Alpha Stone"};
  manage[fx.profiles[1].agent_id] = {"Beta Ridge", "1942"};

  fx.graph = graph::build_graph(fx.record, mentions, triples, fx.profiles, manage,
                                extract::question_type_cues(fx.record.question));
  embed::EmbeddingProvider provider(d_text, 0);
  fx.features = embed::featurize(fx.graph, provider,
                                 extract::question_type_cues(fx.record.question));
  return fx;
}

// Random small graph (<= 8 nodes) built through the production builder.
inline graph::KnowledgeGraph random_small_graph(std::uint64_t seed,
                                                const std::vector<dataio::AgentProfile>& profiles) {
  std::mt19937_64 rng(seed);
  static const char* kSurfaces[] = {"Alpha Stone", "Beta Ridge", "Gamma Falls", "Delta Crown"};

  const int entity_count = static_cast<int>(rng() % 5);  // 0..4
  std::vector<extract::EntityMention> mentions;
  for (int i = 0; i < entity_count; ++i) {
    auto kind = static_cast<extract::MentionKind>(rng() % 3);
    mentions.push_back(mention(kSurfaces[i], kind, 1 + static_cast<int>(rng() % 3), 10 * i));
  }
  std::vector<extract::RelationTriple> triples;
  if (entity_count >= 2 && rng() % 2 == 0) {
    triples.push_back({mentions[0].surface, "linked", mentions[1].surface, {0, 20}});
  }

  dataio::DatasetRecord record;
  record.id = "rand-" + std::to_string(seed);
  record.context = "synthetic";
  record.gold_answers = {"x"};
  record.source_dataset = "rand";
  record.question = "Which of these?";
  for (int i = 0; i < entity_count; ++i) {
    if (rng() % 2 == 0) record.question += " " + mentions[i].surface;
  }

  graph::AgentEntityMap manage;
  for (const auto& p : profiles) {
    std::set<std::string> chosen;
    for (int i = 0; i < entity_count; ++i) {
      if (rng() % 2 == 0) chosen.insert(mentions[i].surface);
    }
    if (!chosen.empty()) manage[p.agent_id] = chosen;
  }
  if (manage.empty() && entity_count > 0) {
    manage[profiles.front().agent_id] = {mentions[0].surface};
  }

  return graph::build_graph(record, mentions, triples, profiles, manage,
                            extract::question_type_cues(record.question));
}

inline Matrix random_features(std::uint64_t seed, int d_in, int nodes) {
  std::mt19937_64 rng(seed);
  Matrix features(d_in, nodes);
  for (int c = 0; c < nodes; ++c) {
    for (int r = 0; r < d_in; ++r) {
      features(r, c) = 2.0 * uniform_unit(rng()) - 1.0;
    }
  }
  return features;
}

}  // namespace testsupport
