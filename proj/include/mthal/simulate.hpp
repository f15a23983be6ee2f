#pragma once
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mthal/data.hpp"
#include "mthal/estimator.hpp"
#include "mthal/metrics.hpp"

namespace mthal {

enum class DgpFamily { kNonlinear, kLinear, kHighDimNonlinear };
enum class SparsityLevel { kHigh, kLow };
enum class Sharing { kSame, kDifferent };

struct DgpConfig {
    std::string name = "NHS";
    DgpFamily family = DgpFamily::kNonlinear;
    SparsityLevel sparsity = SparsityLevel::kHigh;
    Sharing sharing = Sharing::kSame;
    int d = 6;
    int K = 5;
    std::vector<int> n_per_task{100, 100, 150, 150, 100};
    int test_per_task = 1000;
    double noise_sd = 0.1;
    double noise_coef = 0.3;
    std::uint64_t seed = 1;

    /// Nominal fraction of zero coefficients: 0.6 (high) or 0.2 (low).
    double sparsity_fraction() const;
    void validate() const;
};

/// Named setups: {N,L,HN} x {H,L} sparsity x {S,D} sharing, e.g. "NHS", "LLD", "HNHS".
/// High-dimensional presets use d = 20.
DgpConfig dgp_preset(const std::string& name);

/// Rescales the default task sizes to a total of n rows (each task keeps at
/// least 2 rows).
std::vector<int> split_sizes(int n_total, const std::vector<int>& proportions);

/// One additive piece of a task's regression function.
struct SignalTerm {
    std::vector<int> covariates;   // one (main effect) or two (product)
    int transform = 0;             // index into the transform library; -1 = identity
    double coefficient = 0.0;
};

struct TaskTruth {
    int task_id = 0;
    std::vector<int> support;      // sorted covariate indices
    std::vector<SignalTerm> terms;

    double evaluate(std::span<const double> w) const;
};

/// Transform library: 0 log(1+|x|), 1 cos(x), 2 x^2, 3 exp(x/2) (last one
/// only in the high-dimensional family).
double apply_transform(int transform, double x);

struct SimReplicate {
    std::vector<TaskDataset> train;
    std::vector<TaskDataset> test;
    std::vector<TaskTruth> truth;
    Support true_support;

    /// psi_0 at the given rows (task looked up by label).
    Vector signal(const StackedDataset& rows) const;
};

/// Sub-seed for stream `stream` of replicate `rep` (splitmix64 mixing).
std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t rep, std::uint64_t stream);

/// Deterministic in (cfg, rep): truth, training and test draws come from
/// three independent sub-seeds.
SimReplicate gen_replicate(const DgpConfig& cfg, std::uint64_t rep);

/// Draws `n_per_task` fresh rows of covariates and outcomes for a replicate's truth.
std::vector<TaskDataset> draw_tasks(const DgpConfig& cfg, const std::vector<TaskTruth>& truth,
                                    const std::vector<int>& n_per_task, std::uint64_t seed);

struct MethodOutput {
    Vector test_prediction;   // aligned with stack(replicate.test)
    Support support;
};

struct Method {
    std::string name;
    std::function<MethodOutput(const SimReplicate&)> run;
};

Method mthal_method(const EstimatorConfig& config);
Method baseline_method(BaselineKind kind, const EstimatorConfig& config);

struct MethodSummary {
    std::string setup;
    std::string method;
    double mse = 0.0, mse_se = 0.0;
    double precision = 0.0, precision_se = 0.0;
    double accuracy = 0.0, accuracy_se = 0.0;
    std::size_t reps_used = 0;
    std::size_t failures = 0;
    std::vector<double> mse_per_rep;   // NaN for failed replicates
    std::vector<std::string> errors;
};

struct SimReport {
    std::vector<MethodSummary> rows;

    const MethodSummary& row(const std::string& method) const;
};

/// Replicates run in parallel on `threads` workers; aggregation follows
/// replicate order so results do not depend on scheduling.
SimReport run_mc(const DgpConfig& cfg, const std::vector<Method>& methods, int reps, unsigned threads = 1);

/// Tab-delimited: setup, method, mse, mse_se, precision, precision_se,
/// accuracy, accuracy_se, reps_used, failures.
void write_report_tsv(std::ostream& os, const SimReport& report);
/// Aligned table with columns Setup, Method, MSE, Prec %, Accu %.
void write_report_table(std::ostream& os, const SimReport& report);

} // namespace mthal
