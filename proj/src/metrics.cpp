#include "aggrml/metrics.hpp"

#include <cmath>
#include <limits>

#include "aggrml/errors.hpp"

namespace aggrml {

double classification_accuracy(std::span<const LabelId> predicted,
                               std::span<const LabelId> truth) {
  if (predicted.empty()) throw InvalidArgument("accuracy of an empty test set");
  if (predicted.size() != truth.size()) {
    throw InvalidArgument("prediction and truth lengths differ");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] == truth[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

double rmse(std::span<const double> predictions, std::span<const double> actuals) {
  if (predictions.empty()) throw InvalidArgument("RMSE of an empty test set");
  if (predictions.size() != actuals.size()) {
    throw InvalidArgument("prediction and actual lengths differ");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double e = predictions[i] - actuals[i];
    sum += e * e;
  }
  return std::sqrt(sum / static_cast<double>(predictions.size()));
}

double accuracy_loss_pct(MetricDirection direction, double exact, double approx) {
  if (exact == 0.0) {
    return approx == exact ? 0.0 : std::numeric_limits<double>::infinity();
  }
  const double delta = direction == MetricDirection::higher_is_better
                           ? exact - approx
                           : approx - exact;
  return delta / exact * 100.0;
}

}  // namespace aggrml
