#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "maldet/model.hpp"

namespace maldet {

struct ConfusionMatrix {
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tp = 0;

  std::uint64_t total() const { return tn + fp + fn + tp; }
};

// Malware is the positive class. Undefined precision/recall/F1 fall back
// to 0 so batch evaluation never aborts.
struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Eval-mode maliciousness scores, in dataset order.
std::vector<double> score_dataset(const ModelParams& params,
                                  std::span<const EncodedSample> dataset,
                                  std::int32_t batch_size = 32);

// Label 1 iff score >= threshold.
std::vector<int> predict_from_scores(std::span<const double> scores,
                                     double threshold);

std::vector<int> predict(const ModelParams& params,
                         std::span<const EncodedSample> dataset,
                         double threshold, std::int32_t batch_size = 32);

// Throws LengthMismatch when preds and labels differ in length.
ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels);

Metrics metrics_from_confusion(const ConfusionMatrix& cm);

// Plain-text table in the paper's convention: rows = true label,
// columns = prediction.
std::string format_confusion(const ConfusionMatrix& cm);

// Structured report (threshold, raw counts, derived metrics) as JSON text
// with a stable key order, so identical inputs give identical bytes.
std::string metrics_report_json(const ConfusionMatrix& cm, const Metrics& m,
                                double threshold);

}  // namespace maldet
