#pragma once
#include <functional>
#include <optional>
#include <set>
#include <utility>

#include "mthal/data.hpp"

namespace mthal {

/// (task id, covariate index) pairs with a nonzero effect.
using Support = std::set<std::pair<int, int>>;

/// sum g (pred - y)^2 / sum g; plain mean when weights are absent.
double mse(const Vector& pred, const Vector& y, const std::optional<Vector>& weights = std::nullopt);

struct SupportComparison {
    std::size_t true_positive = 0;
    std::size_t false_positive = 0;
    std::size_t false_negative = 0;
};

SupportComparison compare_support(const Support& estimated, const Support& truth);

/// Precision TP/(TP+FP) and "accuracy" TP/(TP+FN) (i.e. recall), in percent.
/// A ratio with a zero denominator is reported as 100 and flagged.
struct SupportMetrics {
    double precision = 100.0;
    double accuracy = 100.0;
    bool precision_undefined = false;
    bool accuracy_undefined = false;
    SupportComparison counts;
};

SupportMetrics support_metrics(const Support& estimated, const Support& truth);

using RowFunction = std::function<Vector(const StackedDataset&)>;

/// Monte-Carlo estimate of ||psi_hat - psi_0||^2 over the probe rows.
double dissimilarity(const RowFunction& model, const RowFunction& truth, const StackedDataset& probe);
double dissimilarity(const Vector& model_values, const Vector& truth_values);

} // namespace mthal
