#pragma once

#include <span>

#include "aggrml/knn.hpp"

namespace aggrml {

/// Fraction of predictions equal to the truth. Throws on empty or
/// mismatched input.
double classification_accuracy(std::span<const LabelId> predicted,
                               std::span<const LabelId> truth);

/// sqrt(sum (p - r)^2 / n). Throws on empty or mismatched input.
double rmse(std::span<const double> predictions, std::span<const double> actuals);

enum class MetricDirection { higher_is_better, lower_is_better };

/// Percentage loss of `approx` relative to `exact`: decreased accuracy for
/// classification, increased error for RMSE, divided by the exact value.
/// Negative when the approximation happens to do better. With exact == 0 the
/// loss is 0 if approx == 0 and +inf otherwise.
double accuracy_loss_pct(MetricDirection direction, double exact, double approx);

}  // namespace aggrml
