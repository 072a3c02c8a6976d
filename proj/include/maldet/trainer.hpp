#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "maldet/model.hpp"

namespace maldet {

struct TrainConfig {
  std::int32_t batch_size = 32;
  std::int32_t max_epochs = 10;
  double learning_rate = 1e-3;
  std::int32_t early_stop_patience = 3;  // 0 disables early stopping
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double grad_clip_norm = 1.0;  // global norm; 0 disables clipping
};

struct EpochStats {
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::int32_t stopped_epoch = 0;  // number of completed epochs
  std::int32_t best_epoch = 0;     // 1-based epoch with minimal val loss
  bool diverged = false;           // loss went non-finite; aborted early
};

struct BceResult {
  double loss = 0.0;
  std::vector<double> dlogit;  // (score - label) / batch, per sample
};

// Mean binary cross-entropy over the batch; probabilities are clamped to
// [1e-7, 1-1e-7] inside the logs only.
BceResult bce_loss(std::span<const double> scores, std::span<const int> labels);

// Validation-loss early stopping; improvement is strict so ties resolve
// toward the earlier epoch.
class EarlyStopTracker {
 public:
  explicit EarlyStopTracker(std::int32_t patience) : patience_(patience) {}

  // Returns true when this epoch became the new best.
  bool observe(double val_loss) {
    ++epoch_;
    if (val_loss < best_loss_) {
      best_loss_ = val_loss;
      best_epoch_ = epoch_;
      stale_ = 0;
      return true;
    }
    ++stale_;
    return false;
  }

  bool should_stop() const { return patience_ > 0 && stale_ >= patience_; }
  std::int32_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  std::int32_t patience_ = 0;
  std::int32_t epoch_ = 0;
  std::int32_t best_epoch_ = 0;
  std::int32_t stale_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

// Adaptive moment estimation with bias correction. Parameters are rounded
// through float32 after each step (see ModelParams).
class AdamOptimizer {
 public:
  AdamOptimizer(const ModelParams& like, double learning_rate, double beta1,
                double beta2, double epsilon);
  void step(ModelParams& params, const ModelParams& grads);

 private:
  ModelParams m_;
  ModelParams v_;
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

// Scales grads in place so their global L2 norm is at most max_norm.
void clip_global_norm(ModelParams& grads, double max_norm);

struct TrainResult {
  ModelParams params;  // parameters from the best epoch
  TrainHistory history;
};

using EpochCallback = std::function<void(std::int32_t epoch, const EpochStats&)>;

// Mean loss / accuracy (threshold 0.5) of an eval-mode pass.
EpochStats evaluate_split(const ModelParams& params,
                          std::span<const EncodedSample> samples,
                          std::int32_t batch_size);

// Seeded shuffling, mini-batched forward/backward/Adam with global-norm
// clipping, per-epoch validation, and early stopping on validation loss.
// A non-finite loss aborts with history.diverged set and the history so
// far; otherwise the best-epoch parameters are returned.
TrainResult train(ModelParams params, const TrainConfig& config,
                  std::span<const EncodedSample> train_set,
                  std::span<const EncodedSample> validation_set,
                  const EpochCallback& on_epoch = {});

}  // namespace maldet
