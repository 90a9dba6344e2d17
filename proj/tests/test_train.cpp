#include "agentrouter/train.hpp"

#include "agentrouter/eval.hpp"
#include "support/fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace agentrouter;

namespace {

train::TrainExample fixture_example(const testsupport::GradcheckFixture& fx) {
  train::TrainExample ex;
  ex.record_id = fx.record.id;
  ex.graph = &fx.graph;
  ex.features = fx.features;
  ex.answers = {"Mason Gray", "purple elephant"};
  ex.golds = fx.record.gold_answers;
  ex.f1 = Vector(2);
  ex.f1 << 1.0, 0.0;
  return ex;
}

double max_abs_tensor(const gnn::ModelParams& params) {
  double out = 0.0;
  gnn::for_each_tensor(const_cast<gnn::ModelParams&>(params),
                       [&](const std::string&, Eigen::Ref<Matrix> t) {
                         if (t.size() > 0) out = std::max(out, t.cwiseAbs().maxCoeff());
                       });
  return out;
}

}  // namespace

TEST_CASE("soft targets: symmetry, the tau=0.25 case, smoothing floor") {
  Vector equal = Vector::Constant(5, 0.6);
  auto uniform = train::soft_targets(equal, 0.25, 1e-3);
  for (int i = 0; i < 5; ++i) CHECK(uniform.probs[i] == doctest::Approx(0.2).epsilon(1e-12));

  Vector two(2);
  two << 1.0, 0.0;
  auto sharp = train::soft_targets(two, 0.25, 0.0);
  const double e4 = std::exp(4.0);
  CHECK(std::abs(sharp.probs[0] - e4 / (e4 + 1.0)) < 1e-12);
  CHECK(std::abs(sharp.probs[1] - 1.0 / (e4 + 1.0)) < 1e-12);
  CHECK(sharp.probs[0] == doctest::Approx(0.9820).epsilon(1e-4));

  Vector many = Vector::Zero(24);
  many[3] = 1.0;
  auto smoothed = train::soft_targets(many, 0.25, 1e-3);
  CHECK(smoothed.probs.minCoeff() >= 1e-3 / 24.0);
  CHECK(smoothed.probs.sum() == doctest::Approx(1.0).epsilon(1e-9));

  Vector bad(2);
  bad << 1.2, 0.0;
  CHECK_THROWS_AS(train::soft_targets(bad, 0.25, 1e-3), DataError);
  CHECK_THROWS_AS(train::soft_targets(two, 0.0, 1e-3), DataError);
}

TEST_CASE("kl_loss: identity, hand value, non-negativity") {
  train::SoftTarget target;
  target.probs = Vector(2);
  target.probs << 0.7, 0.3;
  Vector same = target.probs;
  CHECK(train::kl_loss(target, same) == doctest::Approx(0.0));

  Vector half = Vector::Constant(2, 0.5);
  const double expected = 0.7 * std::log(0.7 / 0.5) + 0.3 * std::log(0.3 / 0.5);
  CHECK(train::kl_loss(target, half) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.0823).epsilon(1e-3));

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 6);
    Vector a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = uniform_unit(rng()) + 1e-6;
      b[i] = uniform_unit(rng()) + 1e-6;
    }
    a /= a.sum();
    b /= b.sum();
    train::SoftTarget t;
    t.probs = a;
    CHECK(train::kl_loss(t, b) >= -1e-12);
  }

  train::SoftTarget short_target;
  short_target.probs = Vector::Constant(3, 1.0 / 3.0);
  CHECK_THROWS_AS(train::kl_loss(short_target, half), DataError);
}

TEST_CASE("gradients match central finite differences on the small fixture") {
  auto fx = testsupport::gradcheck_fixture(8);
  const int d_in = static_cast<int>(fx.features.rows());
  auto params = gnn::init_params(0, {d_in, 8, 2}, fx.graph.agent_order());
  auto target = train::soft_targets(fixture_example(fx).f1, 0.25, 1e-3);
  auto analytic = train::backward(fx.graph, fx.features, params, target);

  const double step = 1e-5;
  double worst = 0.0;
  std::vector<std::pair<std::string, Eigen::Ref<Matrix>>> analytic_tensors;
  gnn::for_each_tensor(analytic.grads, [&](const std::string& name, Eigen::Ref<Matrix> t) {
    analytic_tensors.emplace_back(name, t);
  });
  size_t cursor = 0;
  gnn::for_each_tensor(params, [&](const std::string& name, Eigen::Ref<Matrix> t) {
    const Eigen::Ref<Matrix>& grad = analytic_tensors[cursor].second;
    REQUIRE(analytic_tensors[cursor].first == name);
    ++cursor;
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) {
        const double saved = t(r, c);
        t(r, c) = saved + step;
        double up = train::kl_loss(target, gnn::forward(fx.graph, fx.features, params).probs);
        t(r, c) = saved - step;
        double down = train::kl_loss(target, gnn::forward(fx.graph, fx.features, params).probs);
        t(r, c) = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double diff = std::abs(grad(r, c) - numeric);
        const double rel = diff / std::max({std::abs(grad(r, c)), std::abs(numeric), 1e-30});
        if (diff > 1e-7 && rel > worst) worst = rel;
        CHECK((diff <= 1e-7 || rel <= 1e-4));
      }
    }
  });
  MESSAGE("worst relative gradient error: ", worst);
}

TEST_CASE("gradients match finite differences on random topologies (sampled)") {
  // varied structures: multi-neighbor means, relation chains, empty kinds
  auto profiles = testsupport::tiny_profiles(3);
  const int d_in = embed::feature_dim(8);
  for (std::uint64_t seed : {3ull, 11ull, 27ull}) {
    auto g = testsupport::random_small_graph(seed, profiles);
    Matrix features =
        testsupport::random_features(seed + 99, d_in, static_cast<int>(g.nodes.size()));
    auto params = gnn::init_params(seed, {d_in, 6, 2}, g.agent_order());
    Vector f1(3);
    f1 << 0.9, 0.4, 0.1;
    auto target = train::soft_targets(f1, 0.25, 1e-3);
    auto analytic = train::backward(g, features, params, target);

    std::vector<Matrix> grads;
    gnn::for_each_tensor(analytic.grads,
                         [&](const std::string&, Eigen::Ref<Matrix> t) { grads.push_back(t); });
    const double step = 1e-5;
    size_t tensor_index = 0;
    int entry = 0;
    gnn::for_each_tensor(params, [&](const std::string&, Eigen::Ref<Matrix> t) {
      const Matrix& grad = grads[tensor_index++];
      for (Eigen::Index r = 0; r < t.rows(); ++r) {
        for (Eigen::Index c = 0; c < t.cols(); ++c) {
          if (entry++ % 7 != 0) continue;  // sample for speed
          const double saved = t(r, c);
          t(r, c) = saved + step;
          double up = train::kl_loss(target, gnn::forward(g, features, params).probs);
          t(r, c) = saved - step;
          double down = train::kl_loss(target, gnn::forward(g, features, params).probs);
          t(r, c) = saved;
          const double numeric = (up - down) / (2.0 * step);
          const double diff = std::abs(grad(r, c) - numeric);
          const double rel = diff / std::max({std::abs(grad(r, c)), std::abs(numeric), 1e-30});
          CHECK((diff <= 1e-7 || rel <= 1e-4));
        }
      }
    });
  }
}

TEST_CASE("matched target and prediction give zero gradients") {
  graph::KnowledgeGraph g;
  g.record_id = "no-edges";
  g.add_node(graph::NodeKind::Query, "q");
  g.add_node(graph::NodeKind::Agent, "a0");
  g.add_node(graph::NodeKind::Agent, "a1");
  Matrix features = testsupport::random_features(5, 9, 3);
  auto params = gnn::init_params(4, {9, 6, 2});
  auto trace = gnn::forward(g, features, params);

  train::SoftTarget target;
  target.probs = trace.probs;  // stationary point by construction
  auto result = train::backward(g, features, params, target, trace);
  CHECK(result.loss == doctest::Approx(0.0));
  CHECK(result.grads.head_b2.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK(max_abs_tensor(result.grads) == doctest::Approx(0.0));
}

TEST_CASE("symmetric agents produce swap-invariant gradients") {
  auto profiles = testsupport::tiny_profiles(2);
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
  auto params = gnn::init_params(6, {embed::feature_dim(8), 8, 2}, g.agent_order());

  train::SoftTarget forward_target;
  forward_target.probs = Vector(2);
  forward_target.probs << 0.7, 0.3;
  train::SoftTarget swapped;
  swapped.probs = Vector(2);
  swapped.probs << 0.3, 0.7;

  auto a = train::backward(g, features, params, forward_target);
  auto b = train::backward(g, features, params, swapped);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
  std::vector<Matrix> a_tensors, b_tensors;
  gnn::for_each_tensor(a.grads, [&](const std::string&, Eigen::Ref<Matrix> t) {
    a_tensors.push_back(t);
  });
  gnn::for_each_tensor(b.grads, [&](const std::string&, Eigen::Ref<Matrix> t) {
    b_tensors.push_back(t);
  });
  for (size_t i = 0; i < a_tensors.size(); ++i) {
    CHECK((a_tensors[i] - b_tensors[i]).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("global-norm clipping contract") {
  auto fx = testsupport::gradcheck_fixture(8);
  auto params = gnn::init_params(0, {static_cast<int>(fx.features.rows()), 8, 2},
                                 fx.graph.agent_order());
  auto target = train::soft_targets(fixture_example(fx).f1, 0.25, 1e-3);
  auto result = train::backward(fx.graph, fx.features, params, target);

  double pre = train::global_norm(result.grads);
  REQUIRE(pre > 1e-4);
  const double limit = pre / 3.0;
  double reported = train::clip_gradients(result.grads, limit);
  CHECK(reported == doctest::Approx(pre));
  CHECK(train::global_norm(result.grads) <= limit + 1e-9);

  // under the limit: untouched
  double post = train::clip_gradients(result.grads, 10.0 * limit);
  CHECK(post == doctest::Approx(train::global_norm(result.grads)));
}

TEST_CASE("AdamW step matches the hand-computed decoupled update") {
  gnn::Dims dims{1, 1, 1};
  auto params = gnn::init_params(0, dims);
  auto grads = params.zeros_like();
  gnn::for_each_tensor(params, [&](const std::string&, Eigen::Ref<Matrix> t) { t.setConstant(0.5); });
  gnn::for_each_tensor(grads, [&](const std::string&, Eigen::Ref<Matrix> t) { t.setConstant(0.2); });

  const double lr = 0.1;
  const double wd = 0.5;
  train::AdamW optimizer(params, lr, wd);
  optimizer.step(params, grads);

  // one-step reference, decoupled decay
  const double g = 0.2;
  const double m_hat = ((1.0 - 0.9) * g) / (1.0 - 0.9);
  const double v_hat = ((1.0 - 0.999) * g * g) / (1.0 - 0.999);
  const double expected = 0.5 - lr * wd * 0.5 - lr * m_hat / (std::sqrt(v_hat) + 1e-8);
  // coupled L2 would have folded wd * theta into the gradient instead
  const double g2 = g + wd * 0.5;
  const double coupled = 0.5 - lr * (((1.0 - 0.9) * g2) / (1.0 - 0.9)) /
                                   (std::sqrt(((1.0 - 0.999) * g2 * g2) / (1.0 - 0.999)) + 1e-8);

  gnn::for_each_tensor(params, [&](const std::string&, Eigen::Ref<Matrix> t) {
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) {
        CHECK(t(r, c) == doctest::Approx(expected).epsilon(1e-12));
        CHECK(std::abs(t(r, c) - coupled) > 1e-3);
      }
    }
  });
}

TEST_CASE("fit checkpoints only on strict improvement") {
  auto fx = testsupport::gradcheck_fixture(8);
  std::vector<train::TrainExample> train_set = {fixture_example(fx)};
  std::vector<train::TrainExample> val_set = {fixture_example(fx)};

  train::TrainConfig config;
  config.epochs = 4;
  config.hidden = 8;
  config.layers = 2;
  config.vote_k = 2;

  const std::vector<double> val_sequence = {0.5, 0.5, 0.6, 0.6};
  std::vector<int> checkpoint_epochs;
  train::FitHooks hooks;
  hooks.val_f1_override = [&](const gnn::ModelParams&, int epoch) {
    return val_sequence[epoch - 1];
  };
  hooks.on_checkpoint = [&](int epoch) { checkpoint_epochs.push_back(epoch); };

  auto result = train::fit(train_set, val_set, config, std::nullopt, hooks);
  CHECK(checkpoint_epochs == std::vector<int>{1, 3});
  REQUIRE(result.log.size() == 4);
  CHECK(result.log[0].checkpoint_written);
  CHECK(!result.log[1].checkpoint_written);
  CHECK(result.log[2].checkpoint_written);
  CHECK(!result.log[3].checkpoint_written);
  CHECK(result.best_val_f1 == doctest::Approx(0.6));
}

TEST_CASE("fit is deterministic for a fixed seed and rejects empty sets") {
  auto fx = testsupport::gradcheck_fixture(8);
  std::vector<train::TrainExample> train_set = {fixture_example(fx)};
  std::vector<train::TrainExample> val_set = {fixture_example(fx)};

  train::TrainConfig config;
  config.epochs = 3;
  config.hidden = 8;
  config.layers = 2;
  config.vote_k = 2;
  config.seed = 11;

  auto a = train::fit(train_set, val_set, config);
  auto b = train::fit(train_set, val_set, config);
  REQUIRE(a.log.size() == b.log.size());
  for (size_t i = 0; i < a.log.size(); ++i) {
    CHECK(train::format_log_line(a.log[i]) == train::format_log_line(b.log[i]));
  }

  CHECK_THROWS_AS(train::fit({}, val_set, config), DataError);
  CHECK_THROWS_AS(train::fit(train_set, {}, config), DataError);
  train::TrainConfig bad = config;
  bad.epochs = 0;
  CHECK_THROWS_AS(train::fit(train_set, val_set, bad), UsageError);
}

TEST_CASE("overfit smoke: KL on one graph collapses within 200 epochs") {
  auto fx = testsupport::gradcheck_fixture(8);
  std::vector<train::TrainExample> train_set = {fixture_example(fx)};
  std::vector<train::TrainExample> val_set = {fixture_example(fx)};

  train::TrainConfig config;
  config.epochs = 200;
  config.hidden = 16;
  config.layers = 2;
  config.lr = 5e-3;
  config.vote_k = 2;

  auto result = train::fit(train_set, val_set, config);
  const double initial = result.log.front().mean_train_kl;
  const double final_kl = result.log.back().mean_train_kl;
  REQUIRE(initial > 0.0);
  CHECK(final_kl < 0.1 * initial);
}
