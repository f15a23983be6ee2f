#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mthal {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// One task's sample: O^k = (T^k, X^k, Y^k).
struct TaskDataset {
    int task_id = 0;
    Matrix covariates;                       // n_k x P_k
    Vector outcomes;                         // n_k
    std::optional<Vector> weights;           // g_i^k, defaults to 1
    std::optional<std::vector<std::int64_t>> cluster_ids;
    std::vector<std::string> covariate_names;

    std::size_t rows() const { return static_cast<std::size_t>(outcomes.size()); }

    /// Throws DataError when any invariant is violated.
    void validate() const;
};

/// All tasks stacked row-wise over the union of covariate names.
///
/// Covariates a task does not carry are stored as NaN; `has_covariate`
/// records which task owns which column. `row_ids` tracks the provenance
/// of each row so subsets (CV folds) can be traced back to the full data.
struct StackedDataset {
    std::vector<int> task_ids;               // task label per task index
    std::vector<std::size_t> row_offsets;    // size K + 1
    std::vector<int> task_membership;        // label per row (T)
    std::vector<std::string> covariate_names;
    Matrix covariates;                       // n x d (union)
    Vector outcomes;
    Vector weights;
    std::vector<std::int64_t> cluster_ids;   // empty when absent
    std::vector<std::size_t> row_ids;
    std::vector<std::vector<bool>> has_covariate;  // [task index][covariate]

    std::size_t rows() const { return static_cast<std::size_t>(outcomes.size()); }
    std::size_t cols() const { return static_cast<std::size_t>(covariates.cols()); }
    std::size_t num_tasks() const { return task_ids.size(); }
    bool has_clusters() const { return !cluster_ids.empty(); }

    /// Task index (0-based position in task_ids) of a label, or -1.
    int task_index(int task_id) const;
    /// Task index of each row.
    std::vector<int> task_index_of_rows() const;

    /// Rows picked in the given order; tasks with no picked rows are kept
    /// with empty ranges so task indices stay aligned with the source.
    StackedDataset subset(const std::vector<std::size_t>& rows) const;

    /// Split back into per-task datasets (inverse of stack).
    std::vector<TaskDataset> split() const;
};

enum class WeightScheme { kUniform, kTaskBalanced };

/// Rows ordered task by task; errors on empty input, duplicate ids or empty tasks.
StackedDataset stack(const std::vector<TaskDataset>& tasks,
                     WeightScheme scheme = WeightScheme::kUniform);

enum class StandardizeScope { kPerTask, kPooled };

/// Location/scale per task (or pooled) and covariate, fit on training rows.
struct Standardizer {
    StandardizeScope scope = StandardizeScope::kPerTask;
    std::vector<int> task_ids;
    std::vector<std::string> covariate_names;
    std::vector<std::vector<double>> location;   // [task][covariate]
    std::vector<std::vector<double>> scale;
    std::vector<std::vector<bool>> constant;

    bool identity() const { return task_ids.empty(); }
};

Standardizer standardize_fit(const StackedDataset& train,
                             StandardizeScope scope = StandardizeScope::kPerTask);
StackedDataset standardize_apply(const Standardizer& s, const StackedDataset& data);

} // namespace mthal
