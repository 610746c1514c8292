#include <algorithm>

#include "hydradoc/error.hpp"
#include "hydradoc/training.hpp"

namespace hydradoc {

Metrics compute_metrics(const Matrix& predictions, const Matrix& targets, const Matrix& presence,
                        const std::vector<std::string>& labels) {
  const Eigen::Index n = predictions.rows();
  const Eigen::Index k = predictions.cols();
  if (n == 0) throw InvalidArgument("metrics need at least one document");
  if (targets.rows() != n || targets.cols() != k || presence.rows() != n || presence.cols() != k ||
      static_cast<Eigen::Index>(labels.size()) != k) {
    throw ShapeError("metrics: predictions, targets, presence and labels disagree in shape");
  }

  Metrics m;
  m.documents = static_cast<std::size_t>(n);
  std::size_t scored = 0, hits = 0;
  std::size_t tp = 0, fp = 0, fn = 0;
  std::vector<std::size_t> ltp(static_cast<std::size_t>(k)), lfp(ltp), lfn(ltp);

  for (Eigen::Index i = 0; i < n; ++i) {
    // Top-1 accuracy over documents that have at least one known positive label.
    Eigen::Index best = -1;
    bool has_positive = false;
    for (Eigen::Index c = 0; c < k; ++c) {
      if (presence(i, c) == 0.0) continue;
      has_positive = has_positive || targets(i, c) != 0.0;
      if (best < 0 || predictions(i, c) > predictions(i, best)) best = c;
    }
    if (has_positive) {
      ++scored;
      hits += targets(i, best) != 0.0;
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      if (presence(i, c) == 0.0) continue;
      const bool predicted = predictions(i, c) > 0.5;
      const bool actual = targets(i, c) != 0.0;
      const auto l = static_cast<std::size_t>(c);
      if (predicted && actual) ++tp, ++ltp[l];
      if (predicted && !actual) ++fp, ++lfp[l];
      if (!predicted && actual) ++fn, ++lfn[l];
    }
  }

  m.accuracy = scored == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(scored);
  const std::size_t denom = 2 * tp + fp + fn;
  m.micro_f1 = denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  for (std::size_t c = 0; c < labels.size(); ++c) {
    LabelMetrics lm;
    lm.support = ltp[c] + lfn[c];
    lm.precision = ltp[c] + lfp[c] == 0 ? 0.0 : static_cast<double>(ltp[c]) / static_cast<double>(ltp[c] + lfp[c]);
    lm.recall = lm.support == 0 ? 0.0 : static_cast<double>(ltp[c]) / static_cast<double>(lm.support);
    m.per_label[labels[c]] = lm;
  }
  return m;
}

Metrics evaluate(const HydranetModel& model, const TrainingSet& data) {
  const std::vector<std::string> labels = model.labels();
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto k = static_cast<Eigen::Index>(labels.size());
  Matrix pred(n, k), targets = Matrix::Zero(n, k), presence = Matrix::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::vector<double> p = predict_encoded(model, data.docs[static_cast<std::size_t>(i)]);
    for (Eigen::Index c = 0; c < k; ++c) {
      pred(i, c) = p[static_cast<std::size_t>(c)];
      auto it = std::find(data.labels.begin(), data.labels.end(), labels[static_cast<std::size_t>(c)]);
      if (it == data.labels.end()) continue;
      const auto col = static_cast<Eigen::Index>(it - data.labels.begin());
      targets(i, c) = data.targets(i, col);
      presence(i, c) = data.presence(i, col);
    }
  }
  return compute_metrics(pred, targets, presence, labels);
}

}  // namespace hydradoc
