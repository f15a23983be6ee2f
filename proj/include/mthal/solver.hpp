#pragma once
#include <cstddef>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "mthal/sparse.hpp"

namespace mthal {

/// Weighted group-lasso problem
///   sum_i g_i (y_i - b0_{t(i)} - (X beta)_i)^2 + lambda * sum_p ||beta_p||_2
/// with unpenalized intercepts laid out by `intercepts`.
struct Problem {
    const GroupedMatrix& design;
    const Eigen::VectorXd& y;
    const Eigen::VectorXd& g;
    InterceptLayout intercepts{};
};

struct CoefficientState {
    std::vector<double> intercepts;   // one per intercept group
    Eigen::VectorXd beta;             // one per design column

    double intercept() const { return intercepts.empty() ? 0.0 : intercepts.front(); }
    static CoefficientState zeros(const Problem& problem);
};

/// sum_p sqrt(sum_{c in p} beta_c^2)
double group_l21_norm(const GroupedMatrix& design, const Eigen::VectorXd& beta);
double l1_norm(const Eigen::VectorXd& beta);
std::size_t active_groups(const GroupedMatrix& design, const Eigen::VectorXd& beta);

/// y - intercepts - X beta
Eigen::VectorXd residual(const CoefficientState& state, const Problem& problem);

double objective(const CoefficientState& state, const Problem& problem, double lambda);

/// Proximal map of t * ||.||_2; shrinks to exactly zero when ||v|| <= t.
Eigen::VectorXd group_soft_threshold(const Eigen::VectorXd& v, double t);

/// Weighted means of y within each intercept group (the intercept-only fit).
std::vector<double> null_intercepts(const Problem& problem);

/// Smallest lambda at which the intercept-only solution is optimal.
double lambda_max(const Problem& problem);

/// Largest optimality violation; zero exactly at a minimizer.
double kkt_residual(const CoefficientState& state, const Problem& problem, double lambda);

enum class SolverAlgorithm { kBlockCoordinate, kAcceleratedProximal };

struct SolverConfig {
    SolverAlgorithm algorithm = SolverAlgorithm::kBlockCoordinate;
    double tol = 1e-7;                // KKT residual relative to lambda_max
    std::size_t max_iter = 100'000;   // sweeps (or proximal steps) per lambda
    bool screening = true;
    int extrapolation = 5;            // Anderson window for coordinate descent; 0 disables
    int power_iterations = 20;
    double lipschitz_safety = 1.1;
};

struct PathResult {
    double lambda_max = 0.0;
    std::vector<double> lambda_grid;
    std::vector<CoefficientState> states;
    std::vector<double> objectives;
    std::vector<double> kkt_residuals;
    std::vector<std::size_t> iterations;
    std::vector<std::size_t> active_groups;
    std::vector<bool> converged;

    bool all_converged() const;
};

/// Geometric grid of `count` points from lambda_max down to ratio * lambda_max.
/// A zero lambda_max yields the single point {0}.
std::vector<double> auto_grid(double lambda_max, std::size_t count, double ratio);

/// Warm-started path over a strictly decreasing grid.
PathResult fit_path(const Problem& problem, const std::vector<double>& grid, const SolverConfig& config = {},
                    const CoefficientState* warm_start = nullptr);

/// lambda, objective, active groups, KKT residual, iterations, converged.
void write_path_table(std::ostream& os, const PathResult& path);

} // namespace mthal
