#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "mthal/error.hpp"
#include "mthal/solver.hpp"
#include "support.hpp"

using namespace mthal;
using testing::ProxGradOracle;
using testing::random_problem;

namespace {

Eigen::VectorXd stacked(const CoefficientState& s) {
    Eigen::VectorXd z(static_cast<Eigen::Index>(s.intercepts.size()) + s.beta.size());
    for (std::size_t i = 0; i < s.intercepts.size(); ++i) z[static_cast<Eigen::Index>(i)] = s.intercepts[i];
    z.tail(s.beta.size()) = s.beta;
    return z;
}

SolverConfig tight() {
    SolverConfig c;
    c.tol = 1e-10;
    return c;
}

/// Disjoint-support grouped 0/1 design, the shape an HAL design has.
testing::ToyProblem indicator_problem(std::mt19937_64& rng, int n_per_task, int tasks, int bases) {
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif;
    testing::ToyProblem t;
    const int n = n_per_task * tasks;
    t.dense = Eigen::MatrixXd::Zero(n, bases * tasks);
    t.y.resize(n);
    t.g = Eigen::VectorXd::Ones(n);
    std::vector<double> x(static_cast<std::size_t>(n));
    for (auto& v : x) v = unif(rng);
    for (int i = 0; i < n; ++i) t.y[i] = (x[static_cast<std::size_t>(i)] > 0.4 ? 1.0 : 0.0) * (1 + i / n_per_task) + 0.2 * normal(rng);
    t.design.columns.n_rows = static_cast<std::size_t>(n);
    for (int b = 0; b < bases; ++b) {
        const double knot = (b + 0.5) / bases;
        for (int k = 0; k < tasks; ++k) {
            std::vector<std::uint32_t> rows;
            for (int i = k * n_per_task; i < (k + 1) * n_per_task; ++i)
                if (x[static_cast<std::size_t>(i)] >= knot) {
                    rows.push_back(static_cast<std::uint32_t>(i));
                    t.dense(i, b * tasks + k) = 1.0;
                }
            t.design.columns.push_binary(rows);
            t.group_of.push_back(b);
        }
        t.design.group_start.push_back(t.design.columns.cols());
    }
    return t;
}

} // namespace

TEST_CASE("group soft threshold") {
    Eigen::VectorXd v(2);
    v << 3, 4;
    CHECK(group_soft_threshold(v, 5.0).isZero(0.0));
    CHECK(group_soft_threshold(v, 6.0).isZero(0.0));
    const auto s = group_soft_threshold(v, 2.5);
    CHECK(s[0] == doctest::Approx(1.5));
    CHECK(s[1] == doctest::Approx(2.0));
}

TEST_CASE("norms satisfy l21 <= l1") {
    std::mt19937_64 rng(1);
    auto t = random_problem(rng, 10, {3, 1, 2});
    Eigen::VectorXd b(6);
    b << 1, -2, 0.5, 3, 0, -1;
    CHECK(group_l21_norm(t.design, b) == doctest::Approx(std::sqrt(5.25) + 3 + 1));
    CHECK(l1_norm(b) == doctest::Approx(7.5));
    CHECK(group_l21_norm(t.design, b) <= l1_norm(b) + 1e-12);
    CHECK(active_groups(t.design, b) == 3);
}

TEST_CASE("lambda_max is the exact zero threshold") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        auto t = random_problem(rng, 15 + trial % 10, {2, 3, 1, 2});
        const auto p = t.problem();
        const double lmax = lambda_max(p);
        CoefficientState zero = CoefficientState::zeros(p);
        zero.intercepts = null_intercepts(p);
        CHECK(kkt_residual(zero, p, lmax) <= 1e-10 * std::max(1.0, lmax));

        const auto above = fit_path(p, {1.001 * lmax});
        CHECK(above.active_groups[0] == 0);
        CHECK(above.states[0].beta.isZero(0.0));

        const auto below = fit_path(p, {0.99 * lmax});
        CHECK(below.active_groups[0] >= 1);
    }
}

TEST_CASE("unpenalized fit matches the normal equations") {
    std::mt19937_64 rng(3);
    auto t = random_problem(rng, 20, {2, 2});
    const auto p = t.problem();
    const auto path = fit_path(p, {0.0}, tight());
    Eigen::MatrixXd A(20, 5);
    A.col(0).setOnes();
    A.rightCols(4) = t.dense;
    const Eigen::MatrixXd M = A.transpose() * t.g.asDiagonal() * A;
    const Eigen::VectorXd rhs = A.transpose() * t.g.asDiagonal() * t.y;
    const Eigen::VectorXd ls = M.ldlt().solve(rhs);
    CHECK((stacked(path.states[0]) - ls).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(kkt_residual(path.states[0], p, 0.0) <= 1e-8);
}

TEST_CASE("KKT residual detects a perturbed solution") {
    std::mt19937_64 rng(4);
    auto t = random_problem(rng, 20, {2, 2, 2, 2});
    const auto p = t.problem();
    const double lambda = 0.2 * lambda_max(p);
    auto path = fit_path(p, {lambda}, tight());
    const double tol = 1e-7 * lambda_max(p);
    CHECK(kkt_residual(path.states[0], p, lambda) <= tol);
    auto bumped = path.states[0];
    bumped.beta[0] += 0.1;
    CHECK(kkt_residual(bumped, p, lambda) > tol);
}

TEST_CASE("path agrees with a long-run proximal gradient oracle") {
    std::mt19937_64 rng(5);
    auto t = random_problem(rng, 20, {2, 2, 2, 2});
    const auto p = t.problem();
    const ProxGradOracle oracle(t.dense, t.y, t.g, t.group_of);
    const double lmax = lambda_max(p);
    const std::vector<double> grid{0.5 * lmax, 0.1 * lmax, 0.01 * lmax};
    const auto path = fit_path(p, grid);
    for (std::size_t b = 0; b < grid.size(); ++b) {
        const auto z = oracle.solve(grid[b], 1'000'000);
        const double ours = oracle.objective(stacked(path.states[b]), grid[b]);
        const double ref = oracle.objective(z, grid[b]);
        CHECK(std::abs(ours - ref) <= 1e-8 * std::abs(ref));
        CHECK(path.objectives[b] == doctest::Approx(ref).epsilon(1e-8));
        CHECK(path.kkt_residuals[b] <= 1e-7 * lmax);
    }
}

TEST_CASE("orthogonal indicator groups agree with the oracle") {
    std::mt19937_64 rng(6);
    auto t = indicator_problem(rng, 15, 3, 4);
    const auto p = t.problem();
    const ProxGradOracle oracle(t.dense, t.y, t.g, t.group_of);
    const double lmax = lambda_max(p);
    for (double f : {0.3, 0.05}) {
        const auto path = fit_path(p, {f * lmax}, tight());
        const auto z = oracle.solve(f * lmax, 300'000);
        CHECK(oracle.objective(stacked(path.states[0]), f * lmax) ==
              doctest::Approx(oracle.objective(z, f * lmax)).epsilon(1e-9));
    }
}

TEST_CASE("per-task intercepts") {
    std::mt19937_64 rng(7);
    auto t = random_problem(rng, 24, {2, 1, 3});
    InterceptLayout layout;
    layout.count = 3;
    Eigen::MatrixXd U = Eigen::MatrixXd::Zero(24, 3);
    for (int i = 0; i < 24; ++i) {
        layout.of_row.push_back(i / 8);
        U(i, i / 8) = 1.0;
        t.y[i] += 3.0 * (i / 8);
    }
    const Problem p{t.design, t.y, t.g, layout};
    const double lmax = lambda_max(p);
    const ProxGradOracle oracle(t.dense, t.y, t.g, t.group_of, U);
    const auto path = fit_path(p, {0.3 * lmax, 0.05 * lmax}, tight());
    for (std::size_t b = 0; b < 2; ++b) {
        const auto z = oracle.solve(path.lambda_grid[b], 500'000);
        CHECK(oracle.objective(stacked(path.states[b]), path.lambda_grid[b]) ==
              doctest::Approx(oracle.objective(z, path.lambda_grid[b])).epsilon(1e-8));
        CHECK(path.states[b].intercepts.size() == 3);
    }
}

TEST_CASE("accelerated proximal gradient agrees with coordinate descent") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        auto t = random_problem(rng, 25, {3, 2, 1, 2, 3});
        const auto p = t.problem();
        const auto grid = auto_grid(lambda_max(p), 8, 0.01);
        // Objective-based step acceptance bottoms out near 1e-9 lambda_max,
        // so the accelerated path runs at the default tolerance.
        SolverConfig fista;
        fista.algorithm = SolverAlgorithm::kAcceleratedProximal;
        const auto a = fit_path(p, grid, tight());
        const auto b = fit_path(p, grid, fista);
        CHECK(b.all_converged());
        for (std::size_t i = 0; i < grid.size(); ++i)
            CHECK(a.objectives[i] == doctest::Approx(b.objectives[i]).epsilon(1e-8));
    }
}

TEST_CASE("homogeneity in (y, lambda)") {
    std::mt19937_64 rng(9);
    auto t = random_problem(rng, 20, {2, 2, 1});
    const auto p = t.problem();
    const double lambda = 0.2 * lambda_max(p);
    const auto a = fit_path(p, {lambda}, tight());
    const double c = 3.7;
    const Eigen::VectorXd cy = c * t.y;
    const Problem q{t.design, cy, t.g};
    const auto b = fit_path(q, {c * lambda}, tight());
    CHECK((c * a.states[0].beta - b.states[0].beta).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(c * a.states[0].intercept() == doctest::Approx(b.states[0].intercept()).epsilon(1e-8));
}

TEST_CASE("fits are deterministic") {
    std::mt19937_64 rng(10);
    auto t = random_problem(rng, 30, {2, 3, 2, 1});
    const auto p = t.problem();
    const auto grid = auto_grid(lambda_max(p), 20, 1e-3);
    const auto a = fit_path(p, grid);
    const auto b = fit_path(p, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        CHECK(a.states[i].beta == b.states[i].beta);
        CHECK(a.states[i].intercepts == b.states[i].intercepts);
        CHECK(a.objectives[i] == b.objectives[i]);
    }
}

TEST_CASE("active groups mostly shrink as lambda grows") {
    std::mt19937_64 rng(11);
    int monotone = 0;
    const int trials = 60;
    for (int trial = 0; trial < trials; ++trial) {
        auto t = random_problem(rng, 20, {2, 2, 2, 2});
        const auto path = fit_path(t.problem(), auto_grid(lambda_max(t.problem()), 15, 0.01));
        bool ok = true;
        for (std::size_t i = 1; i < path.active_groups.size(); ++i) ok = ok && path.active_groups[i] >= path.active_groups[i - 1];
        monotone += ok;
        for (const auto& s : path.states) CHECK(group_l21_norm(t.design, s.beta) <= l1_norm(s.beta) + 1e-12);
    }
    CHECK(monotone >= 0.95 * trials);
}

TEST_CASE("objective never exceeds the intercept-only fit") {
    std::mt19937_64 rng(12);
    auto t = random_problem(rng, 20, {1, 2, 3});
    const auto p = t.problem();
    const auto grid = auto_grid(lambda_max(p), 10, 1e-3);
    const auto path = fit_path(p, grid);
    CoefficientState null = CoefficientState::zeros(p);
    null.intercepts = null_intercepts(p);
    for (std::size_t b = 0; b < grid.size(); ++b) CHECK(path.objectives[b] <= objective(null, p, grid[b]) + 1e-9);
}

TEST_CASE("warm start from a supplied state") {
    std::mt19937_64 rng(13);
    auto t = random_problem(rng, 20, {2, 2});
    const auto p = t.problem();
    const double lambda = 0.1 * lambda_max(p);
    const auto cold = fit_path(p, {lambda}, tight());
    const auto warm = fit_path(p, {lambda}, tight(), &cold.states[0]);
    CHECK(warm.iterations[0] <= cold.iterations[0]);
    CHECK(warm.objectives[0] == doctest::Approx(cold.objectives[0]).epsilon(1e-10));
}

TEST_CASE("input validation") {
    std::mt19937_64 rng(14);
    auto t = random_problem(rng, 10, {2});
    const auto p = t.problem();
    CHECK_THROWS_AS(fit_path(p, {1.0, 2.0}), UsageError);
    CHECK_THROWS_AS(fit_path(p, {1.0, 1.0}), UsageError);
    CHECK_THROWS_AS(fit_path(p, {-1.0}), UsageError);
    CHECK_THROWS_AS(fit_path(p, {}), UsageError);
    SolverConfig bad;
    bad.tol = 0.0;
    CHECK_THROWS_AS(fit_path(p, {1.0}, bad), UsageError);
    Eigen::VectorXd y = t.y;
    y[3] = std::nan("");
    const Problem q{t.design, y, t.g};
    CHECK_THROWS_AS(fit_path(q, {1.0}), DataError);
}

TEST_CASE("automatic grid") {
    const auto g = auto_grid(10.0, 5, 1e-2);
    REQUIRE(g.size() == 5);
    CHECK(g.front() == doctest::Approx(10.0));
    CHECK(g.back() == doctest::Approx(0.1));
    for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] / g[i - 1] == doctest::Approx(g[1] / g[0]));
    CHECK(auto_grid(0.0, 5, 1e-2) == std::vector<double>{0.0});
}

TEST_CASE("path table export") {
    std::mt19937_64 rng(15);
    auto t = random_problem(rng, 12, {1, 1});
    const auto path = fit_path(t.problem(), auto_grid(lambda_max(t.problem()), 3, 0.1));
    std::ostringstream os;
    write_path_table(os, path);
    std::istringstream is(os.str());
    std::string header;
    std::getline(is, header);
    CHECK(header.rfind("lambda\tobjective\tactive_groups\tkkt_residual", 0) == 0);
    int lines = 0;
    for (std::string line; std::getline(is, line);) ++lines;
    CHECK(lines == 3);
}

TEST_CASE("objective of the zero model and linearity in lambda") {
    std::mt19937_64 rng(16);
    auto t = random_problem(rng, 12, {2, 1});
    const auto p = t.problem();
    const CoefficientState zero = CoefficientState::zeros(p);
    CHECK(objective(zero, p, 3.0) == doctest::Approx((t.g.array() * t.y.array().square()).sum()));

    CoefficientState s = zero;
    s.beta << 0.5, -1.0, 2.0;
    s.intercepts[0] = 0.3;
    CHECK(objective(s, p, 2.0) == doctest::Approx(objective(s, p, 0.0) + 2.0 * group_l21_norm(t.design, s.beta)));
}

TEST_CASE("lambda_max by hand") {
    // One column of ones on rows 0..1 of four; y = (1, 3, 0, 0), unit weights.
    GroupedMatrix design;
    design.columns.n_rows = 4;
    const std::vector<std::uint32_t> rows{0, 1};
    design.columns.push_binary(rows);
    design.group_start.push_back(1);
    Eigen::VectorXd y(4), g = Eigen::VectorXd::Ones(4);
    y << 1, 3, 0, 0;
    const Problem p{design, y, g};
    // Mean 1, residuals (0, 2, -1, -1); gradient 2 * (0 + 2) = 4.
    CHECK(lambda_max(p) == doctest::Approx(4.0));

    const Eigen::VectorXd flat = Eigen::VectorXd::Constant(4, 2.5);
    CHECK(lambda_max(Problem{design, flat, g}) == doctest::Approx(0.0).epsilon(1e-14));

    const auto beyond = fit_path(p, {8.0});
    CHECK(beyond.active_groups[0] == 0);
    CHECK(beyond.states[0].intercept() == doctest::Approx(1.0));
}

TEST_CASE("extrapolated sweeps reach the same optimum") {
    std::mt19937_64 rng(17);
    auto t = indicator_problem(rng, 20, 3, 8);
    const auto p = t.problem();
    const auto grid = auto_grid(lambda_max(p), 12, 1e-3);
    SolverConfig plain = tight();
    plain.extrapolation = 0;
    const auto a = fit_path(p, grid, tight());
    const auto b = fit_path(p, grid, plain);
    CHECK(a.all_converged());
    for (std::size_t i = 0; i < grid.size(); ++i) CHECK(a.objectives[i] == doctest::Approx(b.objectives[i]).epsilon(1e-9));
}
