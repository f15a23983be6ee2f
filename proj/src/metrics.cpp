#include "mthal/metrics.hpp"

#include "mthal/error.hpp"

namespace mthal {

double mse(const Vector& pred, const Vector& y, const std::optional<Vector>& weights) {
    if (pred.size() != y.size()) throw UsageError("mse: length mismatch");
    if (pred.size() == 0) return 0.0;
    const auto sq = (pred - y).array().square();
    if (!weights) return sq.mean();
    if (weights->size() != y.size()) throw UsageError("mse: weight length mismatch");
    const double total = weights->sum();
    if (!(total > 0.0)) throw UsageError("mse: weights sum to zero");
    return (weights->array() * sq).sum() / total;
}

SupportComparison compare_support(const Support& estimated, const Support& truth) {
    SupportComparison c;
    for (const auto& e : estimated) {
        if (truth.count(e)) ++c.true_positive;
        else ++c.false_positive;
    }
    c.false_negative = truth.size() - c.true_positive;
    return c;
}

SupportMetrics support_metrics(const Support& estimated, const Support& truth) {
    SupportMetrics m;
    m.counts = compare_support(estimated, truth);
    const auto& c = m.counts;
    if (c.true_positive + c.false_positive == 0) {
        m.precision_undefined = true;
        m.precision = 100.0;
    } else {
        m.precision = 100.0 * static_cast<double>(c.true_positive) /
                      static_cast<double>(c.true_positive + c.false_positive);
    }
    if (c.true_positive + c.false_negative == 0) {
        m.accuracy_undefined = true;
        m.accuracy = 100.0;
    } else {
        m.accuracy = 100.0 * static_cast<double>(c.true_positive) /
                     static_cast<double>(c.true_positive + c.false_negative);
    }
    return m;
}

double dissimilarity(const Vector& model_values, const Vector& truth_values) {
    if (model_values.size() != truth_values.size()) throw UsageError("dissimilarity: length mismatch");
    if (model_values.size() == 0) return 0.0;
    return (model_values - truth_values).array().square().mean();
}

double dissimilarity(const RowFunction& model, const RowFunction& truth, const StackedDataset& probe) {
    return dissimilarity(model(probe), truth(probe));
}

} // namespace mthal
