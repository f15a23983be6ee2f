#pragma once
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mthal/basis.hpp"
#include "mthal/cv.hpp"
#include "mthal/data.hpp"
#include "mthal/metrics.hpp"
#include "mthal/solver.hpp"

namespace mthal {

enum class Scaling { kNone, kPerTask, kPooled };

struct EstimatorConfig {
    BasisConfig basis;
    SolverConfig solver;
    std::size_t grid_size = 50;
    double grid_ratio = 1e-3;
    int folds = 5;
    FoldScheme fold_scheme = FoldScheme::kTaskBalanced;
    std::uint64_t seed = 1;
    WeightScheme weights = WeightScheme::kUniform;
    Scaling hal_scaling = Scaling::kNone;          // indicator bases are scale free
    Scaling baseline_scaling = Scaling::kPerTask;
    unsigned threads = 1;                          // fold-level parallelism
};

/// Solver settings used by the CV pipelines unless overridden: the path
/// only needs to rank lambdas and predict, so the KKT tolerance is looser
/// than the library default.
SolverConfig pipeline_solver_defaults();
EstimatorConfig default_estimator_config();

/// Basis/task column with a nonzero coefficient in the final fit.
struct HalTerm {
    BasisFunction basis;
    int task_id = -1;           // -1: one coefficient shared by every supporting task
    std::size_t group = 0;      // group index in the refit design
    double coefficient = 0.0;
};

struct MtHalModel {
    EstimatorConfig config;
    Standardizer standardizer;
    std::vector<int> task_ids;
    std::vector<std::string> covariate_names;
    std::vector<std::vector<bool>> has_covariate;
    bool task_interaction = true;
    std::size_t design_groups = 0;
    std::size_t design_columns = 0;
    double lambda_max = 0.0;
    double lambda = 0.0;
    double intercept = 0.0;
    std::vector<HalTerm> terms;
    double l21_norm = 0.0;
    double l1_norm = 0.0;
    CvRiskTable cv;

    Vector predict(const StackedDataset& rows) const;
};

MtHalModel fit_mthal(const std::vector<TaskDataset>& tasks, const EstimatorConfig& config = default_estimator_config());
MtHalModel fit_mthal(const StackedDataset& data, const EstimatorConfig& config = default_estimator_config());

/// Fit at a fixed lambda on the given design rows, no CV. Exposed for tests
/// and for the grid-oracle experiments.
MtHalModel fit_mthal_at(const StackedDataset& data, double lambda, const EstimatorConfig& config);

/// Validation predictions along a path on a fold: the building block of
/// fit_mthal's CV, usable with cv_select.
FoldFitter mthal_fold_fitter(const EstimatorConfig& config);

enum class BaselineKind { kMtLasso, kMtL21 };
std::string to_string(BaselineKind kind);

struct BaselineModel {
    BaselineKind kind = BaselineKind::kMtLasso;
    EstimatorConfig config;
    Standardizer standardizer;
    std::vector<int> task_ids;
    std::vector<std::string> covariate_names;
    std::vector<std::vector<bool>> has_covariate;
    std::vector<double> intercepts;                  // per task, standardized scale
    std::vector<std::vector<double>> coefficients;   // [task][covariate], standardized scale
    double lambda_max = 0.0;
    double lambda = 0.0;
    CvRiskTable cv;

    /// Coefficients on the original covariate scale.
    std::vector<std::vector<double>> raw_coefficients() const;
    std::vector<double> raw_intercepts() const;
    Vector predict(const StackedDataset& rows) const;
};

/// Raw-covariate design for the baselines: one column per (covariate, task),
/// grouped per column (lasso) or per covariate across tasks (l21).
struct BaselineDesign {
    GroupedMatrix matrix;
    std::vector<int> column_task;        // task index per column
    std::vector<int> column_covariate;   // covariate index per column
    InterceptLayout intercepts;
};
BaselineDesign build_baseline_design(BaselineKind kind, const StackedDataset& data);

BaselineModel fit_baseline(BaselineKind kind, const std::vector<TaskDataset>& tasks,
                           const EstimatorConfig& config = default_estimator_config());
BaselineModel fit_baseline(BaselineKind kind, const StackedDataset& data,
                           const EstimatorConfig& config = default_estimator_config());
FoldFitter baseline_fold_fitter(BaselineKind kind, const EstimatorConfig& config);

/// Coefficients with |beta| <= this are treated as zero.
inline constexpr double kSupportThreshold = 1e-10;

/// (task id, covariate index) pairs; covariate indices follow the model's
/// covariate_names order.
Support extract_support(const MtHalModel& model);
Support extract_support(const BaselineModel& model);

/// Self-describing JSON archive with a versioned header.
void save_model(std::ostream& os, const MtHalModel& model);
void save_model(std::ostream& os, const BaselineModel& model);

struct LoadedModel {
    std::string kind;   // "mt-hal", "mt-lasso" or "mt-l21"
    MtHalModel hal;
    BaselineModel baseline;

    Vector predict(const StackedDataset& rows) const;
};
LoadedModel load_model(std::istream& is);

} // namespace mthal
