#pragma once
// Shared fixtures for the test suites: random grouped problems and an
// independent dense proximal-gradient reference solver.
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "mthal/data.hpp"
#include "mthal/solver.hpp"
#include "mthal/sparse.hpp"

namespace testing {

struct ToyProblem {
    mthal::GroupedMatrix design;
    Eigen::MatrixXd dense;
    Eigen::VectorXd y;
    Eigen::VectorXd g;
    std::vector<int> group_of;   // per column

    mthal::Problem problem() const { return {design, y, g}; }
};

/// Dense Gaussian design stored as valued sparse columns.
inline ToyProblem random_problem(std::mt19937_64& rng, int n, const std::vector<int>& group_sizes,
                                 bool unit_weights = false) {
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif(0.5, 2.0);
    ToyProblem t;
    int p = 0;
    for (int s : group_sizes) p += s;
    t.dense.resize(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) t.dense(i, j) = normal(rng);
    t.y.resize(n);
    t.g.resize(n);
    for (int i = 0; i < n; ++i) {
        t.y[i] = normal(rng) * 2.0 + 1.0;
        t.g[i] = unit_weights ? 1.0 : unif(rng);
    }
    // Give y some signal on the first columns.
    for (int j = 0; j < std::min(p, 3); ++j) t.y += (1.5 - 0.5 * j) * t.dense.col(j);

    t.design.columns.n_rows = static_cast<std::size_t>(n);
    std::vector<std::uint32_t> rows(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(i);
    int col = 0;
    for (std::size_t gi = 0; gi < group_sizes.size(); ++gi) {
        for (int m = 0; m < group_sizes[gi]; ++m, ++col) {
            std::vector<double> vals(t.dense.col(col).data(), t.dense.col(col).data() + n);
            t.design.columns.push_valued(rows, vals);
            t.group_of.push_back(static_cast<int>(gi));
        }
        t.design.group_start.push_back(t.design.columns.cols());
    }
    return t;
}

/// Plain proximal gradient on [u, beta] with step 1/Lip, where Lip is the
/// exact gradient Lipschitz constant 2 * eigmax(A' G A), A = [U X], and the
/// columns of U (default: a single ones column) are unpenalized. Works on
/// the Gram matrix, never touching the solver under test.
struct ProxGradOracle {
    Eigen::MatrixXd gram;     // A' G A
    Eigen::VectorXd aty;      // A' G y
    double yty = 0.0;
    std::vector<int> group_of;
    int groups = 0;
    Eigen::Index free = 1;    // leading unpenalized coordinates
    double step = 0.0;

    ProxGradOracle(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& g,
                   const std::vector<int>& group_of_col, const Eigen::MatrixXd& U = Eigen::MatrixXd())
        : group_of(group_of_col) {
        const auto n = X.rows();
        const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(n, 1);
        const Eigen::MatrixXd& u = U.size() ? U : ones;
        free = u.cols();
        Eigen::MatrixXd A(n, X.cols() + free);
        A.leftCols(free) = u;
        A.rightCols(X.cols()) = X;
        gram = A.transpose() * g.asDiagonal() * A;
        aty = A.transpose() * g.asDiagonal() * y;
        yty = (g.array() * y.array().square()).sum();
        for (int p : group_of) groups = std::max(groups, p + 1);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
        step = 1.0 / (2.0 * es.eigenvalues().maxCoeff());
    }

    double objective(const Eigen::VectorXd& z, double lambda) const {
        double loss = yty - 2.0 * aty.dot(z) + z.dot(gram * z);
        std::vector<double> sq(static_cast<std::size_t>(groups), 0.0);
        for (std::size_t c = 0; c < group_of.size(); ++c)
            sq[static_cast<std::size_t>(group_of[c])] += z[static_cast<Eigen::Index>(c) + free] * z[static_cast<Eigen::Index>(c) + free];
        double pen = 0.0;
        for (double s : sq) pen += std::sqrt(s);
        return loss + lambda * pen;
    }

    /// Returns [u, beta] after `iterations` steps from zero.
    Eigen::VectorXd solve(double lambda, long iterations) const {
        const auto dim = gram.rows();
        Eigen::VectorXd z = Eigen::VectorXd::Zero(dim), grad(dim), v(dim);
        std::vector<double> norms(static_cast<std::size_t>(groups));
        for (long it = 0; it < iterations; ++it) {
            grad.noalias() = gram * z;
            v = z - step * 2.0 * (grad - aty);
            std::fill(norms.begin(), norms.end(), 0.0);
            for (std::size_t c = 0; c < group_of.size(); ++c)
                norms[static_cast<std::size_t>(group_of[c])] += v[static_cast<Eigen::Index>(c) + free] * v[static_cast<Eigen::Index>(c) + free];
            for (auto& s : norms) s = std::sqrt(s);
            z.head(free) = v.head(free);
            for (std::size_t c = 0; c < group_of.size(); ++c) {
                const double nrm = norms[static_cast<std::size_t>(group_of[c])];
                const double shrink = nrm <= step * lambda ? 0.0 : 1.0 - step * lambda / nrm;
                z[static_cast<Eigen::Index>(c) + free] = shrink * v[static_cast<Eigen::Index>(c) + free];
            }
        }
        return z;
    }
};

inline mthal::TaskDataset make_task(int id, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                    std::vector<std::string> names = {}) {
    mthal::TaskDataset t;
    t.task_id = id;
    t.covariates = x;
    t.outcomes = y;
    if (names.empty())
        for (Eigen::Index j = 0; j < x.cols(); ++j) names.push_back("x" + std::to_string(j + 1));
    t.covariate_names = std::move(names);
    return t;
}

} // namespace testing
