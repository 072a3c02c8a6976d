#include "maldet/evaluation.hpp"

#include <algorithm>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "maldet/errors.hpp"

namespace maldet {

std::vector<double> score_dataset(const ModelParams& params,
                                  std::span<const EncodedSample> dataset,
                                  std::int32_t batch_size) {
  std::vector<double> scores;
  scores.reserve(dataset.size());
  for (std::size_t start = 0; start < dataset.size();
       start += static_cast<std::size_t>(batch_size)) {
    std::size_t end = std::min(dataset.size(),
                               start + static_cast<std::size_t>(batch_size));
    std::vector<TokenSequence> batch;
    batch.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) batch.push_back(dataset[i].seq);
    auto fwd = forward(params, batch, /*train_mode=*/false, /*seed=*/0);
    scores.insert(scores.end(), fwd.scores.begin(), fwd.scores.end());
  }
  return scores;
}

std::vector<int> predict_from_scores(std::span<const double> scores,
                                     double threshold) {
  std::vector<int> preds;
  preds.reserve(scores.size());
  for (double s : scores) preds.push_back(s >= threshold ? 1 : 0);
  return preds;
}

std::vector<int> predict(const ModelParams& params,
                         std::span<const EncodedSample> dataset,
                         double threshold, std::int32_t batch_size) {
  auto scores = score_dataset(params, dataset, batch_size);
  return predict_from_scores(scores, threshold);
}

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) {
    throw LengthMismatch("confusion: predictions and labels differ in length");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] == 1) {
      preds[i] == 1 ? ++cm.tp : ++cm.fn;
    } else {
      preds[i] == 1 ? ++cm.fp : ++cm.tn;
    }
  }
  return cm;
}

Metrics metrics_from_confusion(const ConfusionMatrix& cm) {
  Metrics m;
  const double total = static_cast<double>(cm.total());
  if (total <= 0.0) return m;
  m.accuracy = static_cast<double>(cm.tp + cm.tn) / total;
  if (cm.tp + cm.fp > 0) {
    m.precision = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
  } else {
    std::cerr << "warning: precision undefined (no positive predictions); using 0\n";
  }
  if (cm.tp + cm.fn > 0) {
    m.recall = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
  } else {
    std::cerr << "warning: recall undefined (no positive labels); using 0\n";
  }
  if (m.precision + m.recall > 0.0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }
  return m;
}

std::string format_confusion(const ConfusionMatrix& cm) {
  std::ostringstream out;
  out << "label \\ prediction  benign  malware\n";
  out << "benign              " << cm.tn << "  " << cm.fp << "\n";
  out << "malware             " << cm.fn << "  " << cm.tp << "\n";
  return out.str();
}

std::string metrics_report_json(const ConfusionMatrix& cm, const Metrics& m,
                                double threshold) {
  nlohmann::ordered_json doc;
  doc["threshold"] = threshold;
  doc["counts"] = {{"tn", cm.tn}, {"fp", cm.fp}, {"fn", cm.fn}, {"tp", cm.tp},
                   {"total", cm.total()}};
  doc["metrics"] = {{"accuracy", m.accuracy},
                    {"precision", m.precision},
                    {"recall", m.recall},
                    {"f1", m.f1}};
  return doc.dump(2) + "\n";
}

}  // namespace maldet
