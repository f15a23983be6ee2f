#pragma once
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "mthal/data.hpp"

namespace mthal {

enum class FoldScheme { kTaskBalanced, kClustered };

struct FoldAssignment {
    std::vector<int> fold_of_row;   // 0-based fold per row
    int folds = 0;
    FoldScheme scheme = FoldScheme::kTaskBalanced;

    std::vector<std::size_t> validation_rows(int v) const;
    std::vector<std::size_t> training_rows(int v) const;
};

/// Deterministic given the seed.
///
/// Task-balanced: rows of each task are shuffled and dealt round-robin, the
/// dealing position carrying over between tasks. Clustered: clusters are
/// shuffled, ordered by size (largest first) and dealt round-robin.
FoldAssignment make_folds(const StackedDataset& data, int folds, FoldScheme scheme, std::uint64_t seed);

struct CvRiskTable {
    std::vector<double> grid;
    std::vector<double> mean_risk;                 // per lambda
    std::vector<std::vector<double>> fold_risk;    // [fold][lambda]
    std::size_t selected = 0;

    double selected_lambda() const { return grid.at(selected); }
};

/// Index of the smallest risk; ties go to the earlier (larger) lambda.
std::size_t select_index(const std::vector<double>& risk);

/// Fits on `train` over `grid` and returns validation predictions, one
/// column per lambda (rows aligned with `valid`).
using FoldFitter =
    std::function<Matrix(const StackedDataset& train, const StackedDataset& valid, const std::vector<double>& grid)>;

/// Cross-validated choice over a grid expressed in full-data units. Each
/// fold's lambdas are scaled by its share of the total weight so that the
/// per-observation penalty matches the full-data fit.
CvRiskTable cv_select(const StackedDataset& data, const FoldFitter& fitter, const std::vector<double>& grid,
                      const FoldAssignment& folds, unsigned threads = 1);

/// lambda, mean risk, then one column per fold.
void write_risk_table(std::ostream& os, const CvRiskTable& table);

} // namespace mthal
