#include "agentrouter/train.hpp"

#include "agentrouter/eval.hpp"
#include "agentrouter/route.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace agentrouter::train {

using gnn::kMessageKindCount;
using gnn::ModelParams;

SoftTarget soft_targets(const Vector& f1, double tau, double eps) {
  if (tau <= 0.0) throw DataError("soft_targets: tau must be positive");
  if (eps < 0.0 || eps >= 1.0) throw DataError("soft_targets: eps must be in [0,1)");
  for (Eigen::Index i = 0; i < f1.size(); ++i) {
    if (!(f1[i] >= 0.0 && f1[i] <= 1.0)) {
      throw DataError("soft_targets: f1[" + std::to_string(i) + "] outside [0,1]");
    }
  }
  SoftTarget target;
  target.tau = tau;
  target.eps = eps;
  target.probs = gnn::score_to_distribution(f1 / tau);
  if (eps > 0.0) {
    const double uniform = eps / static_cast<double>(f1.size());
    target.probs = (1.0 - eps) * target.probs;
    target.probs.array() += uniform;
  }
  return target;
}

double kl_loss(const SoftTarget& target, const Vector& predicted) {
  if (target.probs.size() != predicted.size()) {
    throw DataError("kl_loss: distribution lengths differ");
  }
  double loss = 0.0;
  for (Eigen::Index i = 0; i < predicted.size(); ++i) {
    const double p = target.probs[i];
    if (p <= 0.0) continue;
    loss += p * (std::log(p) - std::log(predicted[i]));
  }
  return loss;
}

BackwardResult backward(const graph::KnowledgeGraph& g, const Matrix& features,
                        const ModelParams& params, const SoftTarget& target) {
  auto trace = gnn::forward(g, features, params);
  return backward(g, features, params, target, trace);
}

BackwardResult backward(const graph::KnowledgeGraph& g, const Matrix& features,
                        const ModelParams& params, const SoftTarget& target,
                        const gnn::ForwardTrace& trace) {
  const int n = static_cast<int>(g.nodes.size());
  const int d_h = params.dims.d_h;
  const int layers = params.dims.layers;
  const auto agents = g.agent_nodes();
  const int query = g.query_node();
  if (target.probs.size() != static_cast<Eigen::Index>(agents.size())) {
    throw DataError("backward: target length does not match agent count");
  }

  BackwardResult result;
  result.loss = kl_loss(target, trace.probs);
  result.grads = params.zeros_like();
  ModelParams& grads = result.grads;

  // dL/ds = p_theta - p*
  Vector dscores = trace.probs - target.probs;

  const Matrix& h_final = trace.hidden[layers];
  Matrix d_hidden = Matrix::Zero(d_h, n);
  Vector concat(2 * d_h);
  for (size_t j = 0; j < agents.size(); ++j) {
    const int col = static_cast<int>(j);
    const double ds = dscores[col];
    Vector pre = trace.head_pre.col(col);
    Vector post = pre.cwiseMax(0.0);
    grads.head_w2.noalias() += ds * post.transpose();
    grads.head_b2(0) += ds;
    Vector dpost = params.head_w2.transpose() * ds;
    Vector dpre = ((pre.array() > 0.0).cast<double>() * dpost.array()).matrix();
    concat.head(d_h) = h_final.col(query);
    concat.tail(d_h) = h_final.col(agents[j]);
    grads.head_w1.noalias() += dpre * concat.transpose();
    grads.head_b1 += dpre;
    Vector dconcat = params.head_w1.transpose() * dpre;
    d_hidden.col(query) += dconcat.head(d_h);
    d_hidden.col(agents[j]) += dconcat.tail(d_h);
  }

  gnn::Adjacency adj = gnn::build_adjacency(g);
  for (int l = layers - 1; l >= 0; --l) {
    const Matrix& h_prev = trace.hidden[l];
    const Matrix& h_next = trace.hidden[l + 1];
    const Matrix& aggregate = trace.gated_aggregate[l];

    Matrix d_prev = Matrix::Zero(d_h, n);
    Matrix d_aggregate = Matrix::Zero(d_h, n);
    for (int v = 0; v < n; ++v) {
      Vector dz =
          ((h_next.col(v).array() > 0.0).cast<double>() * d_hidden.col(v).array()).matrix();
      const int kind = static_cast<int>(g.nodes[v].kind);
      concat.head(d_h) = h_prev.col(v);
      concat.tail(d_h) = aggregate.col(v);
      grads.update_weight[l][kind].noalias() += dz * concat.transpose();
      grads.update_bias[l][kind] += dz;
      Vector dconcat = params.update_weight[l][kind].transpose() * dz;
      d_prev.col(v) += dconcat.head(d_h);
      d_aggregate.col(v) = dconcat.tail(d_h);
    }

    for (int m = 0; m < kMessageKindCount; ++m) {
      const Matrix& mean = trace.neighbor_mean[l][m];
      const double gate = params.gate[l][m];
      // messages: M = W * mean; aggregate contribution was gate * M
      Matrix messages = params.message_weight[l][m] * mean;
      grads.gate[l][m] += (d_aggregate.cwiseProduct(messages)).sum();
      Matrix d_messages = gate * d_aggregate;
      grads.message_weight[l][m].noalias() += d_messages * mean.transpose();
      Matrix d_mean = params.message_weight[l][m].transpose() * d_messages;
      for (int v = 0; v < n; ++v) {
        const auto& sources = adj.in[m][v];
        if (sources.empty()) continue;
        const double inv = 1.0 / static_cast<double>(sources.size());
        for (int u : sources) d_prev.col(u) += inv * d_mean.col(v);
      }
    }
    d_hidden = std::move(d_prev);
  }

  for (int v = 0; v < n; ++v) {
    const int kind = static_cast<int>(g.nodes[v].kind);
    grads.input_proj[kind].noalias() += d_hidden.col(v) * features.col(v).transpose();
  }

  bool finite = true;
  std::string bad_tensor;
  gnn::for_each_tensor(grads, [&](const std::string& name, Eigen::Ref<Matrix> t) {
    if (finite && !t.allFinite()) {
      finite = false;
      bad_tensor = name;
    }
  });
  if (!finite) throw NumericError("backward: non-finite gradient in tensor " + bad_tensor);
  return result;
}

double global_norm(const ModelParams& grads) {
  double sum = 0.0;
  gnn::for_each_tensor(const_cast<ModelParams&>(grads),
                       [&](const std::string&, Eigen::Ref<Matrix> t) { sum += t.squaredNorm(); });
  return std::sqrt(sum);
}

double clip_gradients(ModelParams& grads, double max_norm) {
  double norm = global_norm(grads);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    gnn::for_each_tensor(grads,
                         [&](const std::string&, Eigen::Ref<Matrix> t) { t *= scale; });
  }
  return norm;
}

void TrainConfig::validate() const {
  if (lr <= 0.0) throw UsageError("lr must be positive");
  if (weight_decay < 0.0) throw UsageError("weight_decay must be non-negative");
  if (clip_norm <= 0.0) throw UsageError("clip_norm must be positive");
  if (tau <= 0.0) throw UsageError("tau must be positive");
  if (eps < 0.0 || eps >= 1.0) throw UsageError("eps must be in [0,1)");
  if (epochs <= 0) throw UsageError("epochs must be positive");
  if (hidden <= 0 || layers <= 0) throw UsageError("hidden and layers must be positive");
  if (vote_k < 1) throw UsageError("vote_k must be >= 1");
}

AdamW::AdamW(const ModelParams& shape, double lr, double weight_decay)
    : lr_(lr), weight_decay_(weight_decay), m_(shape.zeros_like()), v_(shape.zeros_like()) {}

void AdamW::step(ModelParams& params, const ModelParams& grads) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  ++t_;
  const double bias1 = 1.0 - std::pow(kBeta1, t_);
  const double bias2 = 1.0 - std::pow(kBeta2, t_);

  std::vector<Eigen::Ref<Matrix>> param_refs, grad_refs, m_refs, v_refs;
  gnn::for_each_tensor(params, [&](const std::string&, Eigen::Ref<Matrix> t) {
    param_refs.push_back(t);
  });
  gnn::for_each_tensor(const_cast<ModelParams&>(grads),
                       [&](const std::string&, Eigen::Ref<Matrix> t) { grad_refs.push_back(t); });
  gnn::for_each_tensor(m_, [&](const std::string&, Eigen::Ref<Matrix> t) { m_refs.push_back(t); });
  gnn::for_each_tensor(v_, [&](const std::string&, Eigen::Ref<Matrix> t) { v_refs.push_back(t); });

  for (size_t i = 0; i < param_refs.size(); ++i) {
    Eigen::Ref<Matrix> theta = param_refs[i];
    const Eigen::Ref<Matrix>& grad = grad_refs[i];
    Eigen::Ref<Matrix> m = m_refs[i];
    Eigen::Ref<Matrix> v = v_refs[i];
    m = kBeta1 * m + (1.0 - kBeta1) * grad;
    v = kBeta2 * v + (1.0 - kBeta2) * grad.cwiseProduct(grad);
    Matrix m_hat = m / bias1;
    Matrix v_hat = v / bias2;
    // decoupled decay: applied to the weights directly, outside the moments
    theta -= lr_ * weight_decay_ * theta;
    theta -= (lr_ * m_hat.array() / (v_hat.array().sqrt() + kEps)).matrix();
  }
}

namespace {

std::pair<double, double> validation_scores(const std::vector<TrainExample>& val_set,
                                            const ModelParams& params, int vote_k) {
  std::vector<double> f1s, ems;
  for (const auto& ex : val_set) {
    auto result = route::route_record(ex.record_id, *ex.graph, ex.features, params,
                                      ex.answers, vote_k);
    f1s.push_back(eval::token_f1(result.fused_answer, ex.golds));
    ems.push_back(static_cast<double>(eval::exact_match(result.fused_answer, ex.golds)));
  }
  return {100.0 * eval::mean(f1s), 100.0 * eval::mean(ems)};
}

}  // namespace

FitResult fit(const std::vector<TrainExample>& train_set,
              const std::vector<TrainExample>& val_set, const TrainConfig& config,
              const std::optional<std::filesystem::path>& checkpoint_path,
              const FitHooks& hooks) {
  config.validate();
  if (train_set.empty()) throw DataError("fit: empty training set");
  if (val_set.empty()) throw DataError("fit: empty validation set");

  const int d_in = static_cast<int>(train_set.front().features.rows());
  gnn::Dims dims{d_in, config.hidden, config.layers};
  std::vector<std::string> agent_order = train_set.front().graph->agent_order();
  ModelParams params = gnn::init_params(config.seed, dims, agent_order);
  AdamW optimizer(params, config.lr, config.weight_decay);
  std::mt19937_64 rng(config.seed);

  FitResult result;
  result.best = params;
  result.best_val_f1 = -1.0;

  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double kl_sum = 0.0;
    for (size_t idx : order) {
      const TrainExample& ex = train_set[idx];
      SoftTarget target = soft_targets(ex.f1, config.tau, config.eps);
      auto back = backward(*ex.graph, ex.features, params, target);
      if (!std::isfinite(back.loss)) {
        throw NumericError("fit: non-finite loss at epoch " + std::to_string(epoch) +
                           ", record " + ex.record_id);
      }
      kl_sum += back.loss;
      clip_gradients(back.grads, config.clip_norm);
      optimizer.step(params, back.grads);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.mean_train_kl = kl_sum / static_cast<double>(train_set.size());
    if (hooks.val_f1_override) {
      entry.val_f1 = hooks.val_f1_override(params, epoch);
      entry.val_em = entry.val_f1;
    } else {
      auto [f1, em] = validation_scores(val_set, params, config.vote_k);
      entry.val_f1 = f1;
      entry.val_em = em;
    }
    // strict improvement keeps the checkpoint; ties never overwrite
    if (entry.val_f1 > result.best_val_f1) {
      result.best_val_f1 = entry.val_f1;
      result.best = params;
      entry.checkpoint_written = true;
      if (checkpoint_path) gnn::save_checkpoint(*checkpoint_path, params);
      if (hooks.on_checkpoint) hooks.on_checkpoint(epoch);
    }
    result.log.push_back(entry);
  }
  return result;
}

std::string format_log_line(const EpochLog& entry) {
  nlohmann::json j;
  j["epoch"] = entry.epoch;
  j["mean_train_kl"] = entry.mean_train_kl;
  j["val_f1"] = entry.val_f1;
  j["val_em"] = entry.val_em;
  j["checkpoint_written"] = entry.checkpoint_written;
  return j.dump();
}

}  // namespace agentrouter::train
