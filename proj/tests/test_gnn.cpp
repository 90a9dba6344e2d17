#include "agentrouter/gnn.hpp"

#include "support/fixtures.hpp"
#include "support/naive_router.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

using namespace agentrouter;

namespace {

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      if (a(r, c) != b(r, c)) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("init_params: seed determinism, unit gates, zero biases") {
  gnn::Dims dims{13, 8, 2};
  auto a = gnn::init_params(5, dims, {"x", "y"});
  auto b = gnn::init_params(5, dims, {"x", "y"});
  auto other = gnn::init_params(6, dims, {"x", "y"});

  bool identical = true;
  bool differs = false;
  gnn::for_each_tensor(a, [&](const std::string& name, Eigen::Ref<Matrix> t) {
    gnn::for_each_tensor(b, [&](const std::string& name_b, Eigen::Ref<Matrix> t_b) {
      if (name == name_b && !bitwise_equal(t, t_b)) identical = false;
    });
    gnn::for_each_tensor(other, [&](const std::string& name_o, Eigen::Ref<Matrix> t_o) {
      if (name == name_o && !bitwise_equal(t, t_o)) differs = true;
    });
  });
  CHECK(identical);
  CHECK(differs);

  for (int l = 0; l < dims.layers; ++l) {
    for (int m = 0; m < gnn::kMessageKindCount; ++m) {
      CHECK(a.gate[l][m] == 1.0);
    }
    for (int k = 0; k < graph::kNodeKindCount; ++k) {
      CHECK(a.update_bias[l][k].isZero());
    }
  }
  CHECK(a.head_b1.isZero());
  CHECK(a.head_b2.isZero());
}

TEST_CASE("parameter count matches the closed-form shape formula") {
  const int d_in = 13;
  const int d_h = 8;
  const int layers = 2;
  auto params = gnn::init_params(0, {d_in, d_h, layers});
  const std::size_t expected =
      4ull * d_h * d_in +
      static_cast<std::size_t>(layers) *
          (8ull * d_h * d_h + 8ull + 4ull * (2ull * d_h * d_h + d_h)) +
      (2ull * d_h * d_h + d_h) + d_h + 1;
  CHECK(params.parameter_count() == expected);
}

TEST_CASE("message_pass_layer with no edges reduces to the self update") {
  graph::KnowledgeGraph g;
  g.record_id = "manual";
  g.add_node(graph::NodeKind::Query, "q");
  g.add_node(graph::NodeKind::Agent, "a");
  const int d_h = 6;
  auto params = gnn::init_params(3, {4, d_h, 1});

  Matrix h_prev = testsupport::random_features(9, d_h, 2);
  Matrix h_next = gnn::message_pass_layer(g, h_prev, params, 0);
  for (int v = 0; v < 2; ++v) {
    Vector concat(2 * d_h);
    concat.head(d_h) = h_prev.col(v);
    concat.tail(d_h).setZero();
    const int kind = static_cast<int>(g.nodes[v].kind);
    Vector expected =
        (params.update_weight[0][kind] * concat + params.update_bias[0][kind]).cwiseMax(0.0);
    CHECK((h_next.col(v) - expected).norm() == doctest::Approx(0.0));
  }
}

TEST_CASE("two equal in-neighbors give the same message as one") {
  graph::KnowledgeGraph g;
  g.record_id = "manual";
  g.add_node(graph::NodeKind::Entity, "e0");
  g.add_node(graph::NodeKind::Entity, "e1");
  g.add_node(graph::NodeKind::Relation, "rel");
  g.add_edge(0, graph::EdgeKind::IncSrc, 2);
  g.add_edge(1, graph::EdgeKind::IncSrc, 2);

  const int d_h = 5;
  auto params = gnn::init_params(11, {4, d_h, 1});
  Matrix h_prev = testsupport::random_features(13, d_h, 3);
  h_prev.col(1) = h_prev.col(0);  // equal neighbor states

  Matrix h_next = gnn::message_pass_layer(g, h_prev, params, 0);
  const int inc_src = static_cast<int>(gnn::MessageKind::IncSrc);
  Vector message = params.message_weight[0][inc_src] * h_prev.col(0);
  Vector concat(2 * d_h);
  concat.head(d_h) = h_prev.col(2);
  concat.tail(d_h) = params.gate[0][inc_src] * message;
  Vector expected =
      (params.update_weight[0][static_cast<int>(graph::NodeKind::Relation)] * concat +
       params.update_bias[0][static_cast<int>(graph::NodeKind::Relation)])
          .cwiseMax(0.0);
  CHECK((h_next.col(2) - expected).norm() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("forward equals the naive dense recomputation on random small graphs") {
  auto profiles = testsupport::tiny_profiles(2);
  const int d_text = 8;
  const int d_in = embed::feature_dim(d_text);
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    auto g = testsupport::random_small_graph(seed, profiles);
    REQUIRE(g.nodes.size() <= 8);
    Matrix features = testsupport::random_features(seed + 1000, d_in, static_cast<int>(g.nodes.size()));
    auto params = gnn::init_params(seed, {d_in, 8, 2}, g.agent_order());
    auto trace = gnn::forward(g, features, params);
    auto naive = testsupport::naive::forward(g, features, params);

    for (int l = 0; l <= params.dims.layers; ++l) {
      for (size_t v = 0; v < g.nodes.size(); ++v) {
        for (int i = 0; i < params.dims.d_h; ++i) {
          double mine = trace.hidden[l](i, static_cast<int>(v));
          double ref = naive.hidden[l][v][i];
          double scale = std::max({std::abs(mine), std::abs(ref), 1e-12});
          CHECK(std::abs(mine - ref) <= 1e-10 * scale);
        }
      }
    }
    for (Eigen::Index j = 0; j < trace.scores.size(); ++j) {
      double scale = std::max({std::abs(trace.scores[j]), std::abs(naive.scores[j]), 1e-12});
      CHECK(std::abs(trace.scores[j] - naive.scores[j]) <= 1e-10 * scale);
      CHECK(std::abs(trace.probs[j] - naive.probs[j]) <= 1e-10);
    }
  }
}

TEST_CASE("probabilities form a simplex and identical agents tie exactly") {
  auto profiles = testsupport::tiny_profiles(2);
  // same description text -> same features; no manage edges -> same structure
  profiles[0].description_text = "identical twin";
  profiles[1].description_text = "identical twin";
  dataio::DatasetRecord record;
  record.id = "twins";
  record.question = "Which twin?";
  record.context = "ctx";
  record.gold_answers = {"either"};
  auto g = graph::build_graph(record, {}, {}, profiles, {}, {});

  embed::EmbeddingProvider provider(8, 0);
  Matrix features = embed::featurize(g, provider, {});
  auto params = gnn::init_params(1, {embed::feature_dim(8), 8, 2}, g.agent_order());
  auto trace = gnn::forward(g, features, params);
  CHECK(trace.probs.sum() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(trace.scores[0] == trace.scores[1]);
  CHECK(trace.probs[0] == trace.probs[1]);
}

TEST_CASE("an agent with no manage edges still receives a score") {
  auto fx = testsupport::gradcheck_fixture();
  // rebuild with manage edges for agent 0 only
  std::vector<extract::EntityMention> mentions = {
      testsupport::mention("Alpha Stone", extract::MentionKind::Named, 2, 0)};
  graph::AgentEntityMap manage;
  manage[fx.profiles[0].agent_id] = {"Alpha Stone"};
  auto g = graph::build_graph(fx.record, mentions, {}, fx.profiles, manage,
                              extract::question_type_cues(fx.record.question));
  int isolated_agent_edges = 0;
  auto agents = g.agent_nodes();
  for (const auto& e : g.edges) {
    if (e.kind == graph::EdgeKind::AgentEntity && e.src == agents[1]) ++isolated_agent_edges;
  }
  REQUIRE(isolated_agent_edges == 0);

  embed::EmbeddingProvider provider(8, 0);
  Matrix features = embed::featurize(g, provider, {});
  auto params = gnn::init_params(0, {embed::feature_dim(8), 8, 2}, g.agent_order());
  auto trace = gnn::forward(g, features, params);
  REQUIRE(trace.scores.size() == 2);
  CHECK(std::isfinite(trace.scores[1]));
}

TEST_CASE("forward is bit-stable under edge list shuffling") {
  auto fx = testsupport::gradcheck_fixture();
  auto params = gnn::init_params(2, {static_cast<int>(fx.features.rows()), 8, 2},
                                 fx.graph.agent_order());
  auto base = gnn::forward(fx.graph, fx.features, params);

  auto shuffled = fx.graph;
  std::mt19937_64 rng(99);
  std::shuffle(shuffled.edges.begin(), shuffled.edges.end(), rng);
  auto again = gnn::forward(shuffled, fx.features, params);

  for (int l = 0; l <= params.dims.layers; ++l) {
    CHECK(bitwise_equal(base.hidden[l], again.hidden[l]));
  }
  CHECK(bitwise_equal(base.scores, again.scores));
  CHECK(bitwise_equal(base.probs, again.probs));
}

TEST_CASE("score_to_distribution: uniform, shift invariance, large scores") {
  Vector zeros = Vector::Zero(3);
  Vector p = gnn::score_to_distribution(zeros);
  for (int i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(1.0 / 3.0));

  Vector scores(4);
  scores << 0.3, -1.2, 2.0, 0.0;
  Vector shifted = scores.array() + 123.0;
  Vector p1 = gnn::score_to_distribution(scores);
  Vector p2 = gnn::score_to_distribution(shifted);
  CHECK((p1 - p2).cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-12));

  Vector huge(2);
  huge << 1000.0, 0.0;
  Vector ph = gnn::score_to_distribution(huge);
  CHECK(std::isfinite(ph[0]));
  CHECK(ph[0] == doctest::Approx(1.0));
  CHECK(ph[1] == doctest::Approx(0.0));
  CHECK(ph.sum() == doctest::Approx(1.0));

  CHECK_THROWS_AS(gnn::score_to_distribution(Vector()), DataError);
}

TEST_CASE("non-finite activations raise a numeric error naming the layer") {
  auto fx = testsupport::gradcheck_fixture();
  auto params = gnn::init_params(0, {static_cast<int>(fx.features.rows()), 8, 2},
                                 fx.graph.agent_order());
  params.message_weight[1][static_cast<int>(gnn::MessageKind::QueryAgent)](0, 0) =
      std::numeric_limits<double>::infinity();
  CHECK_THROWS_WITH_AS(gnn::forward(fx.graph, fx.features, params),
                       doctest::Contains("layer 2"), NumericError);
}

TEST_CASE("checkpoint round-trip preserves the forward pass bitwise") {
  auto fx = testsupport::gradcheck_fixture();
  auto params = gnn::init_params(7, {static_cast<int>(fx.features.rows()), 16, 2},
                                 fx.graph.agent_order());
  auto dir = std::filesystem::temp_directory_path() / "agentrouter-gnn-tests";
  std::filesystem::create_directories(dir);
  auto path = dir / "roundtrip.bin";
  gnn::save_checkpoint(path, params);
  auto loaded = gnn::load_checkpoint(path);

  CHECK(loaded.agent_order == params.agent_order);
  CHECK(loaded.dims.d_in == params.dims.d_in);
  auto before = gnn::forward(fx.graph, fx.features, params);
  auto after = gnn::forward(fx.graph, fx.features, loaded);
  CHECK(bitwise_equal(before.scores, after.scores));
  CHECK(bitwise_equal(before.probs, after.probs));
  for (int l = 0; l <= params.dims.layers; ++l) {
    CHECK(bitwise_equal(before.hidden[l], after.hidden[l]));
  }

  CHECK_THROWS_AS(gnn::load_checkpoint(dir / "missing.bin"), DataError);
}
