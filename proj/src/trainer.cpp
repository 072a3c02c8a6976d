#include "maldet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "maldet/errors.hpp"
#include "maldet/rng.hpp"

namespace maldet {
namespace {

constexpr double kProbEps = 1e-7;

// Stream tags for derive_seed so shuffling and dropout never collide.
constexpr std::uint64_t kShuffleStream = 0x5348;
constexpr std::uint64_t kDropoutStream = 0xd0;

// Flat coefficient view over all tensors, in for_each_tensor order.
std::vector<std::pair<double*, std::size_t>> flat_view(ModelParams& p) {
  std::vector<std::pair<double*, std::size_t>> view;
  for_each_tensor(p, [&](const std::string&, auto& tensor) {
    view.emplace_back(tensor.data(), static_cast<std::size_t>(tensor.size()));
  });
  return view;
}

}  // namespace

BceResult bce_loss(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw LengthMismatch("bce_loss: scores and labels differ in length");
  }
  BceResult result;
  result.dlogit.resize(scores.size());
  const double n = static_cast<double>(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    double s = std::clamp(scores[i], kProbEps, 1.0 - kProbEps);
    total += labels[i] == 1 ? -std::log(s) : -std::log(1.0 - s);
    result.dlogit[i] = (scores[i] - static_cast<double>(labels[i])) / n;
  }
  result.loss = scores.empty() ? 0.0 : total / n;
  return result;
}

AdamOptimizer::AdamOptimizer(const ModelParams& like, double learning_rate,
                             double beta1, double beta2, double epsilon)
    : m_(ModelParams::zeros_like(like)),
      v_(ModelParams::zeros_like(like)),
      lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(epsilon) {}

void AdamOptimizer::step(ModelParams& params, const ModelParams& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));

  auto pv = flat_view(params);
  auto gv = flat_view(const_cast<ModelParams&>(grads));
  auto mv = flat_view(m_);
  auto vv = flat_view(v_);
  for (std::size_t k = 0; k < pv.size(); ++k) {
    double* p = pv[k].first;
    const double* g = gv[k].first;
    double* m = mv[k].first;
    double* v = vv[k].first;
    for (std::size_t i = 0; i < pv[k].second; ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      double next = p[i] - lr_ * mhat / (std::sqrt(vhat) + eps_);
      p[i] = static_cast<double>(static_cast<float>(next));
    }
  }
}

void clip_global_norm(ModelParams& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  auto view = flat_view(grads);
  for (const auto& [data, n] : view) {
    for (std::size_t i = 0; i < n; ++i) sq += data[i] * data[i];
  }
  double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  double scale = max_norm / norm;
  for (const auto& [data, n] : view) {
    for (std::size_t i = 0; i < n; ++i) data[i] *= scale;
  }
}

EpochStats evaluate_split(const ModelParams& params,
                          std::span<const EncodedSample> samples,
                          std::int32_t batch_size) {
  EpochStats stats;
  if (samples.empty()) return stats;
  double loss_sum = 0.0;
  std::size_t correct = 0;

  for (std::size_t start = 0; start < samples.size();
       start += static_cast<std::size_t>(batch_size)) {
    std::size_t end = std::min(samples.size(),
                               start + static_cast<std::size_t>(batch_size));
    std::vector<TokenSequence> batch;
    std::vector<int> labels;
    batch.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(samples[i].seq);
      labels.push_back(samples[i].label);
    }
    auto fwd = forward(params, batch, /*train_mode=*/false, /*seed=*/0);
    auto bce = bce_loss(fwd.scores, labels);
    loss_sum += bce.loss * static_cast<double>(end - start);
    for (std::size_t i = 0; i < fwd.scores.size(); ++i) {
      int pred = fwd.scores[i] >= 0.5 ? 1 : 0;
      if (pred == labels[i]) ++correct;
    }
  }
  stats.val_loss = loss_sum / static_cast<double>(samples.size());
  stats.val_accuracy =
      static_cast<double>(correct) / static_cast<double>(samples.size());
  return stats;
}

TrainResult train(ModelParams params, const TrainConfig& config,
                  std::span<const EncodedSample> train_set,
                  std::span<const EncodedSample> validation_set,
                  const EpochCallback& on_epoch) {
  if (train_set.empty() || validation_set.empty()) {
    throw std::invalid_argument("train and validation sets must be non-empty");
  }
  params.config.validate();

  AdamOptimizer optimizer(params, config.learning_rate, config.beta1,
                          config.beta2, config.epsilon);
  EarlyStopTracker tracker(config.early_stop_patience);

  TrainResult result;
  result.params = params;  // replaced by the first best epoch below
  TrainHistory& history = result.history;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::int32_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(config.seed, kShuffleStream,
                                static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    bool finite = true;

    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size), ++batch_index) {
      std::size_t end = std::min(order.size(),
                                 start + static_cast<std::size_t>(config.batch_size));
      std::vector<TokenSequence> batch;
      std::vector<int> labels;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(train_set[order[i]].seq);
        labels.push_back(train_set[order[i]].label);
      }

      std::uint64_t step_seed =
          derive_seed(config.seed, kDropoutStream,
                      static_cast<std::uint64_t>(epoch), batch_index);
      auto fwd = forward(params, batch, /*train_mode=*/true, step_seed);
      auto bce = bce_loss(fwd.scores, labels);
      if (!std::isfinite(bce.loss)) {
        finite = false;
        break;
      }
      loss_sum += bce.loss * static_cast<double>(end - start);
      for (std::size_t i = 0; i < fwd.scores.size(); ++i) {
        if ((fwd.scores[i] >= 0.5 ? 1 : 0) == labels[i]) ++correct;
      }

      ModelParams grads = backward(params, fwd.cache, bce.dlogit);
      clip_global_norm(grads, config.grad_clip_norm);
      optimizer.step(params, grads);
    }

    if (!finite) {
      std::cerr << "warning: training diverged (non-finite loss) in epoch "
                << epoch << "; aborting with history so far\n";
      history.diverged = true;
      break;
    }

    EpochStats stats;
    stats.train_loss = loss_sum / static_cast<double>(train_set.size());
    stats.train_accuracy =
        static_cast<double>(correct) / static_cast<double>(train_set.size());
    EpochStats val = evaluate_split(params, validation_set, config.batch_size);
    stats.val_loss = val.val_loss;
    stats.val_accuracy = val.val_accuracy;
    if (!std::isfinite(stats.val_loss)) {
      std::cerr << "warning: validation loss non-finite in epoch " << epoch
                << "; aborting with history so far\n";
      history.diverged = true;
      break;
    }

    history.epochs.push_back(stats);
    history.stopped_epoch = epoch;
    if (tracker.observe(stats.val_loss)) {
      result.params = params;
      history.best_epoch = tracker.best_epoch();
    }
    if (on_epoch) on_epoch(epoch, stats);
    if (tracker.should_stop()) break;
  }

  if (history.best_epoch == 0) {
    // No finite-validation epoch ever improved: fall back to the final state.
    result.params = params;
  }
  return result;
}

}  // namespace maldet
