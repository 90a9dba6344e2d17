#pragma once

#include "agentrouter/common.hpp"
#include "agentrouter/gnn.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace agentrouter::train {

struct SoftTarget {
  Vector probs;
  double tau = 0.25;
  double eps = 1e-3;
};

/// softmax(f1 / tau), then mixed with uniform: (1-eps) p + eps/|A|.
SoftTarget soft_targets(const Vector& f1, double tau, double eps);

/// KL(target || predicted); zero-probability target entries contribute 0.
double kl_loss(const SoftTarget& target, const Vector& predicted);

struct BackwardResult {
  double loss = 0.0;
  gnn::ModelParams grads;
};

/// Exact reverse-mode gradients of the KL loss through the scoring softmax,
/// the MLP head, every message-passing layer, and the input projections.
BackwardResult backward(const graph::KnowledgeGraph& g, const Matrix& features,
                        const gnn::ModelParams& params, const SoftTarget& target);

/// Same, reusing a forward trace already computed for these inputs.
BackwardResult backward(const graph::KnowledgeGraph& g, const Matrix& features,
                        const gnn::ModelParams& params, const SoftTarget& target,
                        const gnn::ForwardTrace& trace);

double global_norm(const gnn::ModelParams& grads);

/// Scales gradients so the global norm is at most max_norm; returns the
/// pre-clip norm.
double clip_gradients(gnn::ModelParams& grads, double max_norm);

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double clip_norm = 1.0;
  double tau = 0.25;
  double eps = 1e-3;
  int epochs = 30;
  std::uint64_t seed = 0;
  int hidden = 256;
  int layers = 2;
  int vote_k = 24;  // k used for per-epoch validation routing

  void validate() const;
};

/// AdamW with decoupled weight decay, beta = (0.9, 0.999), eps = 1e-8.
class AdamW {
 public:
  AdamW(const gnn::ModelParams& shape, double lr, double weight_decay);
  void step(gnn::ModelParams& params, const gnn::ModelParams& grads);
  int steps_taken() const { return t_; }

 private:
  double lr_;
  double weight_decay_;
  int t_ = 0;
  gnn::ModelParams m_;
  gnn::ModelParams v_;
};

struct TrainExample {
  std::string record_id;
  const graph::KnowledgeGraph* graph = nullptr;
  Matrix features;
  Vector f1;  // per-agent supervision in [0,1], canonical order
  std::vector<std::string> answers;
  std::vector<std::string> golds;
};

struct EpochLog {
  int epoch = 0;
  double mean_train_kl = 0.0;
  double val_f1 = 0.0;  // percentages
  double val_em = 0.0;
  bool checkpoint_written = false;
};

struct FitHooks {
  // Test seam: replaces the validation F1 computation when set.
  std::function<double(const gnn::ModelParams&, int epoch)> val_f1_override;
  std::function<void(int epoch)> on_checkpoint;
};

struct FitResult {
  gnn::ModelParams best;
  std::vector<EpochLog> log;
  double best_val_f1 = -1.0;
};

/// Per-record steps in a seed-shuffled order; AdamW with global-norm
/// clipping; a checkpoint is kept (and written, when a path is given) only
/// on strict validation-F1 improvement.
FitResult fit(const std::vector<TrainExample>& train_set,
              const std::vector<TrainExample>& val_set, const TrainConfig& config,
              const std::optional<std::filesystem::path>& checkpoint_path = std::nullopt,
              const FitHooks& hooks = {});

std::string format_log_line(const EpochLog& entry);

}  // namespace agentrouter::train
