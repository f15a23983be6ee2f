#include "mthal/solver.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <Eigen/Eigenvalues>

#include "mthal/error.hpp"

namespace mthal {

CoefficientState CoefficientState::zeros(const Problem& problem) {
    CoefficientState s;
    s.intercepts.assign(static_cast<std::size_t>(problem.intercepts.count), 0.0);
    s.beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(problem.design.columns.cols()));
    return s;
}

double group_l21_norm(const GroupedMatrix& design, const Eigen::VectorXd& beta) {
    double total = 0.0;
    for (std::size_t p = 0; p < design.num_groups(); ++p) {
        const auto lo = static_cast<Eigen::Index>(design.group_start[p]);
        total += beta.segment(lo, static_cast<Eigen::Index>(design.group_size(p))).norm();
    }
    return total;
}

double l1_norm(const Eigen::VectorXd& beta) { return beta.lpNorm<1>(); }

std::size_t active_groups(const GroupedMatrix& design, const Eigen::VectorXd& beta) {
    std::size_t count = 0;
    for (std::size_t p = 0; p < design.num_groups(); ++p) {
        const auto lo = static_cast<Eigen::Index>(design.group_start[p]);
        if ((beta.segment(lo, static_cast<Eigen::Index>(design.group_size(p))).array() != 0.0).any()) ++count;
    }
    return count;
}

Eigen::VectorXd residual(const CoefficientState& state, const Problem& problem) {
    Eigen::VectorXd fitted;
    problem.design.columns.multiply(state.beta, fitted);
    Eigen::VectorXd r = problem.y - fitted;
    if (problem.intercepts.count > 0) {
        for (Eigen::Index i = 0; i < r.size(); ++i)
            r[i] -= state.intercepts[static_cast<std::size_t>(problem.intercepts.index(static_cast<std::size_t>(i)))];
    }
    return r;
}

double objective(const CoefficientState& state, const Problem& problem, double lambda) {
    const auto r = residual(state, problem);
    return (problem.g.array() * r.array().square()).sum() + lambda * group_l21_norm(problem.design, state.beta);
}

Eigen::VectorXd group_soft_threshold(const Eigen::VectorXd& v, double t) {
    const double norm = v.norm();
    if (norm <= t) return Eigen::VectorXd::Zero(v.size());
    return (1.0 - t / norm) * v;
}

std::vector<double> null_intercepts(const Problem& problem) {
    const auto count = static_cast<std::size_t>(problem.intercepts.count);
    std::vector<double> num(count, 0.0), den(count, 0.0);
    for (Eigen::Index i = 0; i < problem.y.size(); ++i) {
        if (count == 0) break;
        const auto j = static_cast<std::size_t>(problem.intercepts.index(static_cast<std::size_t>(i)));
        num[j] += problem.g[i] * problem.y[i];
        den[j] += problem.g[i];
    }
    std::vector<double> out(count, 0.0);
    for (std::size_t j = 0; j < count; ++j) out[j] = den[j] > 0.0 ? num[j] / den[j] : 0.0;
    return out;
}

namespace {

// Gradient of the smooth loss wrt every column: -2 X^T G r.
Eigen::VectorXd full_gradient(const Problem& problem, const Eigen::VectorXd& r) {
    const Eigen::VectorXd gr = problem.g.cwiseProduct(r);
    const auto& cols = problem.design.columns;
    Eigen::VectorXd grad(static_cast<Eigen::Index>(cols.cols()));
    for (std::size_t c = 0; c < cols.cols(); ++c) grad[static_cast<Eigen::Index>(c)] = -2.0 * cols.dot(c, gr);
    return grad;
}

double group_kkt(const Eigen::VectorXd& grad, const Eigen::VectorXd& beta, Eigen::Index lo, Eigen::Index size,
                 double lambda) {
    const auto b = beta.segment(lo, size);
    const auto gp = grad.segment(lo, size);
    const double bn = b.norm();
    if (bn > 0.0) return (gp + (lambda / bn) * b).norm();
    return std::max(0.0, gp.norm() - lambda);
}

double intercept_kkt(const Problem& problem, const Eigen::VectorXd& r) {
    const auto count = static_cast<std::size_t>(problem.intercepts.count);
    if (count == 0) return 0.0;
    std::vector<double> s(count, 0.0);
    for (Eigen::Index i = 0; i < r.size(); ++i)
        s[static_cast<std::size_t>(problem.intercepts.index(static_cast<std::size_t>(i)))] += problem.g[i] * r[i];
    double worst = 0.0;
    for (double v : s) worst = std::max(worst, std::abs(2.0 * v));
    return worst;
}

} // namespace

double lambda_max(const Problem& problem) {
    CoefficientState s = CoefficientState::zeros(problem);
    s.intercepts = null_intercepts(problem);
    const auto r = residual(s, problem);
    const auto grad = full_gradient(problem, r);
    double best = 0.0;
    const auto& d = problem.design;
    for (std::size_t p = 0; p < d.num_groups(); ++p)
        best = std::max(best, grad.segment(static_cast<Eigen::Index>(d.group_start[p]),
                                           static_cast<Eigen::Index>(d.group_size(p))).norm());
    return best;
}

double kkt_residual(const CoefficientState& state, const Problem& problem, double lambda) {
    const auto r = residual(state, problem);
    const auto grad = full_gradient(problem, r);
    double worst = intercept_kkt(problem, r);
    const auto& d = problem.design;
    for (std::size_t p = 0; p < d.num_groups(); ++p)
        worst = std::max(worst, group_kkt(grad, state.beta, static_cast<Eigen::Index>(d.group_start[p]),
                                          static_cast<Eigen::Index>(d.group_size(p)), lambda));
    return worst;
}

bool PathResult::all_converged() const {
    return std::all_of(converged.begin(), converged.end(), [](bool c) { return c; });
}

std::vector<double> auto_grid(double lmax, std::size_t count, double ratio) {
    if (count == 0) throw UsageError("auto_grid: need at least one grid point");
    if (!(ratio > 0.0 && ratio < 1.0)) throw UsageError("auto_grid: ratio must lie in (0, 1)");
    if (!(lmax > 0.0)) return {0.0};
    std::vector<double> grid(count);
    if (count == 1) return {lmax};
    const double step = std::log(ratio) / static_cast<double>(count - 1);
    for (std::size_t b = 0; b < count; ++b) grid[b] = lmax * std::exp(step * static_cast<double>(b));
    grid.front() = lmax;
    return grid;
}

namespace {

/// Per-problem constants and the mutable state of one path fit.
class PathSolver {
public:
    PathSolver(const Problem& problem, const SolverConfig& config)
        : problem_(problem), config_(config), cols_(problem.design.columns), design_(problem.design) {
        const auto m = cols_.cols();
        curvature_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
        for (std::size_t c = 0; c < m; ++c) {
            const auto rows = cols_.rows_of(c);
            const auto vals = cols_.values_of(c);
            double s = 0.0;
            for (std::size_t e = 0; e < rows.size(); ++e) {
                const double x = vals.empty() ? 1.0 : vals[e];
                s += problem.g[rows[e]] * x * x;
            }
            curvature_[static_cast<Eigen::Index>(c)] = 2.0 * s;
        }
        // Groups whose columns share rows need a local Gram matrix.
        const auto G = design_.num_groups();
        orthogonal_.assign(G, true);
        gram_index_.assign(G, -1);
        std::vector<std::size_t> stamp(problem.y.size(), 0);
        std::size_t tick = 0;
        for (std::size_t p = 0; p < G; ++p) {
            if (design_.group_size(p) < 2) continue;
            ++tick;
            bool disjoint = true;
            for (auto c = design_.group_start[p]; c < design_.group_start[p + 1] && disjoint; ++c)
                for (auto r : cols_.rows_of(c)) {
                    if (stamp[r] == tick) {
                        disjoint = false;
                        break;
                    }
                    stamp[r] = tick;
                }
            if (disjoint) continue;
            orthogonal_[p] = false;
            gram_index_[p] = static_cast<int>(grams_.size());
            const auto size = static_cast<Eigen::Index>(design_.group_size(p));
            Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(problem.y.size(), size);
            for (Eigen::Index a = 0; a < size; ++a) {
                const auto c = design_.group_start[p] + static_cast<std::size_t>(a);
                const auto rows = cols_.rows_of(c);
                const auto vals = cols_.values_of(c);
                for (std::size_t e = 0; e < rows.size(); ++e) dense(rows[e], a) = vals.empty() ? 1.0 : vals[e];
            }
            Eigen::MatrixXd gram = 2.0 * dense.transpose() * problem.g.asDiagonal() * dense;
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
            grams_.push_back(std::move(gram));
            gram_lipschitz_.push_back(std::max(eig.eigenvalues().maxCoeff(), 0.0));
        }
        icount_ = static_cast<std::size_t>(problem.intercepts.count);
        iweight_.assign(icount_, 0.0);
        for (Eigen::Index i = 0; i < problem.y.size(); ++i)
            if (icount_ > 0) iweight_[static_cast<std::size_t>(problem.intercepts.index(static_cast<std::size_t>(i)))] += problem.g[i];
    }

    PathResult run(const std::vector<double>& grid, const CoefficientState* warm) {
        PathResult out;
        out.lambda_max = lambda_max(problem_);
        out.lambda_grid = grid;
        abs_tol_ = config_.tol * (out.lambda_max > 0.0 ? out.lambda_max : 1.0);

        state_ = warm ? *warm : CoefficientState::zeros(problem_);
        if (!warm) state_.intercepts = null_intercepts(problem_);
        r_ = residual(state_, problem_);
        refresh_gradient();

        double prev_lambda = std::max(out.lambda_max, grid.empty() ? 0.0 : grid.front());
        for (double lambda : grid) {
            std::size_t iters = 0;
            const double kkt = solve(lambda, prev_lambda, iters);
            out.states.push_back(state_);
            out.objectives.push_back((problem_.g.array() * r_.array().square()).sum() +
                                     lambda * group_l21_norm(design_, state_.beta));
            out.kkt_residuals.push_back(kkt);
            out.iterations.push_back(iters);
            out.active_groups.push_back(active_groups(design_, state_.beta));
            out.converged.push_back(kkt <= abs_tol_);
            prev_lambda = lambda;
        }
        return out;
    }

private:
    Eigen::Index lo(std::size_t p) const { return static_cast<Eigen::Index>(design_.group_start[p]); }
    Eigen::Index size(std::size_t p) const { return static_cast<Eigen::Index>(design_.group_size(p)); }

    void refresh_gradient() { grad_ = full_gradient(problem_, r_); }

    double full_kkt(double lambda) const {
        double worst = intercept_kkt(problem_, r_);
        for (std::size_t p = 0; p < design_.num_groups(); ++p)
            worst = std::max(worst, group_kkt(grad_, state_.beta, lo(p), size(p), lambda));
        return worst;
    }

    double column_grad(std::size_t c) const {
        const auto rows = cols_.rows_of(c);
        const auto vals = cols_.values_of(c);
        double s = 0.0;
        if (vals.empty()) {
            for (auto r : rows) s += problem_.g[r] * r_[r];
        } else {
            for (std::size_t e = 0; e < rows.size(); ++e) s += problem_.g[rows[e]] * vals[e] * r_[rows[e]];
        }
        return -2.0 * s;
    }

    void shift_column(std::size_t c, double delta) {
        if (delta != 0.0) cols_.axpy(c, -delta, r_);
    }

    void update_intercepts() {
        if (icount_ == 0) return;
        std::vector<double> s(icount_, 0.0);
        for (Eigen::Index i = 0; i < r_.size(); ++i)
            s[static_cast<std::size_t>(problem_.intercepts.index(static_cast<std::size_t>(i)))] += problem_.g[i] * r_[i];
        for (std::size_t j = 0; j < icount_; ++j) s[j] = iweight_[j] > 0.0 ? s[j] / iweight_[j] : 0.0;
        for (Eigen::Index i = 0; i < r_.size(); ++i)
            r_[i] -= s[static_cast<std::size_t>(problem_.intercepts.index(static_cast<std::size_t>(i)))];
        for (std::size_t j = 0; j < icount_; ++j) state_.intercepts[j] += s[j];
    }

    // Exact minimization over group p with the others held fixed. Returns the
    // group's KKT violation before the update.
    double update_group(std::size_t p, double lambda) {
        const auto m = size(p);
        const auto first = design_.group_start[p];
        if (m == 1) return update_single(p, lambda);
        auto& grad = scratch_grad_;
        auto& old = scratch_old_;
        auto& next = scratch_next_;
        auto& z = scratch_z_;
        grad.resize(m);
        for (Eigen::Index a = 0; a < m; ++a) grad[a] = column_grad(first + static_cast<std::size_t>(a));
        old = state_.beta.segment(lo(p), m);
        const double bn = old.norm();
        const double pre = bn > 0.0 ? (grad + (lambda / bn) * old).norm() : std::max(0.0, grad.norm() - lambda);
        if (bn == 0.0 && grad.norm() <= lambda) return pre;

        next.resize(m);
        if (orthogonal_[p]) {
            const auto H = curvature_.segment(lo(p), m);
            z = H.cwiseProduct(old) - grad;
            const double zn = z.norm();
            if (zn <= lambda) {
                next.setZero();
            } else if (lambda == 0.0) {
                for (Eigen::Index a = 0; a < m; ++a) next[a] = H[a] > 0.0 ? z[a] / H[a] : 0.0;
            } else {
                // ||b|| = t solves sum_c z_c^2 / (H_c t + lambda)^2 = 1.
                double hmax = 0.0;
                for (Eigen::Index a = 0; a < m; ++a)
                    if (z[a] != 0.0) hmax = std::max(hmax, H[a]);
                double t = (zn - lambda) / hmax;
                for (int it = 0; it < 100; ++it) {
                    double f = -1.0, fp = 0.0;
                    for (Eigen::Index a = 0; a < m; ++a) {
                        if (z[a] == 0.0) continue;
                        const double den = H[a] * t + lambda;
                        f += z[a] * z[a] / (den * den);
                        fp -= 2.0 * z[a] * z[a] * H[a] / (den * den * den);
                    }
                    if (fp == 0.0) break;
                    const double step = f / fp;
                    t -= step;
                    if (std::abs(step) <= 1e-15 * t) break;
                }
                for (Eigen::Index a = 0; a < m; ++a) next[a] = z[a] == 0.0 ? 0.0 : z[a] * t / (H[a] * t + lambda);
            }
        } else {
            const auto& gram = grams_[static_cast<std::size_t>(gram_index_[p])];
            const double L = gram_lipschitz_[static_cast<std::size_t>(gram_index_[p])];
            if (!(L > 0.0)) return pre;
            Eigen::VectorXd b = old;
            Eigen::VectorXd gcur = grad;
            for (int it = 0; it < 500; ++it) {
                Eigen::VectorXd bn_vec = group_soft_threshold(b - gcur / L, lambda / L);
                const double change = (bn_vec - b).norm();
                gcur += gram * (bn_vec - b);
                b = std::move(bn_vec);
                if (change <= 1e-15 * (1.0 + b.norm())) break;
            }
            next = b;
        }
        for (Eigen::Index a = 0; a < m; ++a) {
            const double delta = next[a] - old[a];
            if (delta != 0.0) {
                shift_column(first + static_cast<std::size_t>(a), delta);
                state_.beta[lo(p) + a] = next[a];
            }
        }
        return pre;
    }

    // Scalar soft-thresholding for singleton groups.
    double update_single(std::size_t p, double lambda) {
        const auto c = design_.group_start[p];
        const auto i = static_cast<Eigen::Index>(c);
        const double grad = column_grad(c);
        const double old = state_.beta[i];
        const double pre = old != 0.0 ? std::abs(grad + (old > 0.0 ? lambda : -lambda)) : std::max(0.0, std::abs(grad) - lambda);
        const double H = curvature_[i];
        if (!(H > 0.0)) return pre;
        const double z = H * old - grad;
        const double next = std::abs(z) <= lambda ? 0.0 : (z - std::copysign(lambda, z)) / H;
        if (next != old) {
            shift_column(c, next - old);
            state_.beta[i] = next;
        }
        return pre;
    }

    std::vector<std::size_t> initial_working_set(double lambda, double prev_lambda) const {
        std::vector<std::size_t> ws;
        const double strong = 2.0 * lambda - prev_lambda;
        for (std::size_t p = 0; p < design_.num_groups(); ++p) {
            const bool nonzero = (state_.beta.segment(lo(p), size(p)).array() != 0.0).any();
            if (nonzero || !config_.screening || grad_.segment(lo(p), size(p)).norm() > strong) ws.push_back(p);
        }
        return ws;
    }

    // Adds zero groups outside the working set that violate optimality.
    bool add_violators(std::vector<std::size_t>& ws, double lambda) const {
        std::vector<bool> in(design_.num_groups(), false);
        for (auto p : ws) in[p] = true;
        bool added = false;
        for (std::size_t p = 0; p < design_.num_groups(); ++p) {
            if (in[p]) continue;
            if (grad_.segment(lo(p), size(p)).norm() > lambda) {
                ws.push_back(p);
                added = true;
            }
        }
        std::sort(ws.begin(), ws.end());
        return added;
    }

    double solve(double lambda, double prev_lambda, std::size_t& iters) {
        auto ws = initial_working_set(lambda, prev_lambda);
        double inner_tol = 0.5 * abs_tol_;
        double kkt = 0.0;
        for (;;) {
            if (config_.algorithm == SolverAlgorithm::kBlockCoordinate)
                run_coordinate(ws, lambda, inner_tol, iters);
            else
                run_proximal(ws, lambda, inner_tol, iters);
            refresh_gradient();
            kkt = full_kkt(lambda);
            const bool added = add_violators(ws, lambda);
            if ((kkt <= abs_tol_ && !added) || iters >= config_.max_iter) break;
            if (!added) inner_tol *= 0.1;
            if (inner_tol < 1e-18 * std::max(1.0, abs_tol_)) break;
        }
        return kkt;
    }

    void run_coordinate(const std::vector<std::size_t>& ws, double lambda, double inner_tol, std::size_t& iters) {
        update_intercepts();
        std::vector<std::size_t> active;
        while (iters < config_.max_iter) {
            // One pass over the whole working set, then cycle on the nonzero
            // groups until they settle.
            ++iters;
            double worst = 0.0;
            for (auto p : ws) worst = std::max(worst, update_group(p, lambda));
            update_intercepts();
            if (worst <= inner_tol) break;
            active.clear();
            for (auto p : ws)
                if ((state_.beta.segment(lo(p), size(p)).array() != 0.0).any()) active.push_back(p);
            const int window = std::max(0, config_.extrapolation);
            Anderson anderson(*this, active, window);
            while (iters < config_.max_iter) {
                ++iters;
                double w = 0.0;
                for (auto p : active) w = std::max(w, update_group(p, lambda));
                update_intercepts();
                if (w <= inner_tol) break;
                anderson.step(lambda);
            }
        }
    }

    // Anderson extrapolation over the last `window` sweeps on a fixed set of
    // groups. An extrapolated point is kept only when it lowers the
    // objective, so the sweep sequence stays monotone.
    class Anderson {
    public:
        Anderson(PathSolver& e, const std::vector<std::size_t>& groups, int window)
            : e_(e), groups_(groups), window_(window) {
            if (window_ < 2) return;
            for (auto p : groups_)
                for (auto c = e_.design_.group_start[p]; c < e_.design_.group_start[p + 1]; ++c) cols_.push_back(c);
            hist_.resize(static_cast<Eigen::Index>(cols_.size()), window_ + 1);
            record();
        }

        void step(double lambda) {
            if (window_ < 2 || cols_.empty()) return;
            record();
            if (count_ <= window_) return;
            extrapolate(lambda);
            count_ = 0;
            record();
        }

    private:
        void record() {
            for (std::size_t m = 0; m < cols_.size(); ++m)
                hist_(static_cast<Eigen::Index>(m), count_) = e_.state_.beta[static_cast<Eigen::Index>(cols_[m])];
            ++count_;
        }

        double value(double lambda) const {
            double pen = 0.0;
            for (auto p : groups_) pen += e_.state_.beta.segment(e_.lo(p), e_.size(p)).norm();
            return (e_.problem_.g.array() * e_.r_.array().square()).sum() + lambda * pen;
        }

        void extrapolate(double lambda) {
            const Eigen::MatrixXd U = hist_.rightCols(window_) - hist_.leftCols(window_);
            Eigen::MatrixXd gram = U.transpose() * U;
            const double scale = gram.trace();
            if (!(scale > 0.0)) return;
            gram.diagonal().array() += 1e-12 * scale;
            const Eigen::VectorXd z = gram.ldlt().solve(Eigen::VectorXd::Ones(window_));
            const double total = z.sum();
            if (!z.allFinite() || total == 0.0) return;
            const Eigen::VectorXd point = hist_.rightCols(window_) * (z / total);

            const double before = value(lambda);
            const Eigen::VectorXd r_keep = e_.r_;
            const auto icpt_keep = e_.state_.intercepts;
            const Eigen::VectorXd beta_keep = hist_.col(window_);
            for (std::size_t m = 0; m < cols_.size(); ++m) {
                const auto i = static_cast<Eigen::Index>(cols_[m]);
                e_.shift_column(cols_[m], point[static_cast<Eigen::Index>(m)] - e_.state_.beta[i]);
                e_.state_.beta[i] = point[static_cast<Eigen::Index>(m)];
            }
            e_.update_intercepts();
            if (value(lambda) < before) return;
            for (std::size_t m = 0; m < cols_.size(); ++m)
                e_.state_.beta[static_cast<Eigen::Index>(cols_[m])] = beta_keep[static_cast<Eigen::Index>(m)];
            e_.r_ = r_keep;
            e_.state_.intercepts = icpt_keep;
        }

        PathSolver& e_;
        const std::vector<std::size_t>& groups_;
        int window_;
        std::vector<std::size_t> cols_;
        Eigen::MatrixXd hist_;
        Eigen::Index count_ = 0;
    };

    // Working-set objective pieces for the proximal route. The intercepts are
    // profiled out: after every step they are reset to their closed form.
    double smooth_at(const Eigen::VectorXd& beta, const std::vector<std::size_t>& wcols, Eigen::VectorXd& r) {
        r = problem_.y;
        for (auto c : wcols) {
            const double b = beta[static_cast<Eigen::Index>(c)];
            if (b != 0.0) cols_.axpy(c, -b, r);
        }
        if (icount_ > 0) {
            std::vector<double> s(icount_, 0.0);
            for (Eigen::Index i = 0; i < r.size(); ++i)
                s[static_cast<std::size_t>(problem_.intercepts.index(static_cast<std::size_t>(i)))] += problem_.g[i] * r[i];
            for (std::size_t j = 0; j < icount_; ++j) s[j] = iweight_[j] > 0.0 ? s[j] / iweight_[j] : 0.0;
            for (Eigen::Index i = 0; i < r.size(); ++i)
                r[i] -= s[static_cast<std::size_t>(problem_.intercepts.index(static_cast<std::size_t>(i)))];
            profiled_intercepts_ = s;
        }
        return (problem_.g.array() * r.array().square()).sum();
    }

    double penalty(const Eigen::VectorXd& beta, const std::vector<std::size_t>& ws) const {
        double s = 0.0;
        for (auto p : ws) s += beta.segment(lo(p), size(p)).norm();
        return s;
    }

    void run_proximal(const std::vector<std::size_t>& ws, double lambda, double inner_tol, std::size_t& iters) {
        std::vector<std::size_t> wcols;
        for (auto p : ws)
            for (auto c = design_.group_start[p]; c < design_.group_start[p + 1]; ++c) wcols.push_back(c);
        if (wcols.empty()) {
            update_intercepts();
            return;
        }
        const double L0 = working_lipschitz(wcols);
        double L = L0 > 0.0 ? L0 : 1.0;

        Eigen::VectorXd x = state_.beta;
        Eigen::VectorXd y = x;
        Eigen::VectorXd r;
        double fx = smooth_at(x, wcols, r) + lambda * penalty(x, ws);
        double t = 1.0;
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(x.size());
        Eigen::VectorXd z(x.size());
        Eigen::VectorXd rz;

        std::size_t local = 0;
        while (iters < config_.max_iter) {
            ++iters;
            ++local;
            const double fy = smooth_at(y, wcols, r);
            const Eigen::VectorXd gr = problem_.g.cwiseProduct(r);
            for (auto c : wcols) grad[static_cast<Eigen::Index>(c)] = -2.0 * cols_.dot(c, gr);
            double fz = 0.0;
            for (int bt = 0; bt < 60; ++bt) {
                z = x;
                for (auto p : ws) {
                    Eigen::VectorXd v = y.segment(lo(p), size(p)) - grad.segment(lo(p), size(p)) / L;
                    z.segment(lo(p), size(p)) = group_soft_threshold(v, lambda / L);
                }
                fz = smooth_at(z, wcols, rz);
                double bound = fy;
                for (auto c : wcols) {
                    const auto i = static_cast<Eigen::Index>(c);
                    const double dz = z[i] - y[i];
                    bound += grad[i] * dz + 0.5 * L * dz * dz;
                }
                if (fz <= bound + 1e-12 * std::abs(bound)) break;
                L *= 2.0;
            }
            const double Fz = fz + lambda * penalty(z, ws);
            const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            if (Fz <= fx) {
                y = z + ((t - 1.0) / t_next) * (z - x);
                x = z;
                fx = Fz;
                t = t_next;
            } else {
                // Monotone restart: drop momentum and keep the better iterate.
                y = x;
                t = 1.0;
            }
            if (local % 10 == 0) {
                state_.beta = x;
                r_ = residual_with_profile(x, wcols);
                double worst = intercept_kkt(problem_, r_);
                const Eigen::VectorXd gr2 = problem_.g.cwiseProduct(r_);
                for (auto p : ws) {
                    Eigen::VectorXd gp(size(p));
                    for (Eigen::Index a = 0; a < size(p); ++a)
                        gp[a] = -2.0 * cols_.dot(design_.group_start[p] + static_cast<std::size_t>(a), gr2);
                    const auto b = x.segment(lo(p), size(p));
                    const double bn = b.norm();
                    worst = std::max(worst, bn > 0.0 ? (gp + (lambda / bn) * b).norm() : std::max(0.0, gp.norm() - lambda));
                }
                if (worst <= inner_tol) break;
            }
        }
        state_.beta = x;
        r_ = residual_with_profile(x, wcols);
    }

    Eigen::VectorXd residual_with_profile(const Eigen::VectorXd& beta, const std::vector<std::size_t>& wcols) {
        Eigen::VectorXd r;
        smooth_at(beta, wcols, r);
        if (icount_ > 0) state_.intercepts = profiled_intercepts_;
        return r;
    }

    // Power iteration on 2 X_W^T G X_W, inflated by the safety factor.
    double working_lipschitz(const std::vector<std::size_t>& wcols) const {
        Eigen::VectorXd v = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(wcols.size()));
        v /= v.norm();
        double est = 0.0;
        Eigen::VectorXd xv(problem_.y.size());
        for (int it = 0; it < config_.power_iterations; ++it) {
            xv.setZero();
            for (std::size_t a = 0; a < wcols.size(); ++a) cols_.axpy(wcols[a], v[static_cast<Eigen::Index>(a)], xv);
            const Eigen::VectorXd gxv = problem_.g.cwiseProduct(xv);
            Eigen::VectorXd w(static_cast<Eigen::Index>(wcols.size()));
            for (std::size_t a = 0; a < wcols.size(); ++a) w[static_cast<Eigen::Index>(a)] = 2.0 * cols_.dot(wcols[a], gxv);
            est = w.norm();
            if (!(est > 0.0)) return 0.0;
            v = w / est;
        }
        return config_.lipschitz_safety * est;
    }

    const Problem& problem_;
    SolverConfig config_;
    const SparseColumns& cols_;
    const GroupedMatrix& design_;
    Eigen::VectorXd curvature_;
    std::vector<bool> orthogonal_;
    std::vector<int> gram_index_;
    std::vector<Eigen::MatrixXd> grams_;
    std::vector<double> gram_lipschitz_;
    std::size_t icount_ = 0;
    std::vector<double> iweight_;
    std::vector<double> profiled_intercepts_;
    double abs_tol_ = 0.0;

    Eigen::VectorXd scratch_grad_, scratch_old_, scratch_next_, scratch_z_;

    CoefficientState state_;
    Eigen::VectorXd r_;
    Eigen::VectorXd grad_;
};

void check_inputs(const Problem& problem) {
    const auto n = problem.design.columns.n_rows;
    if (static_cast<std::size_t>(problem.y.size()) != n || static_cast<std::size_t>(problem.g.size()) != n)
        throw UsageError("fit_path: design, outcome and weight dimensions differ");
    if (!problem.y.allFinite()) throw DataError("fit_path: outcomes contain NaN or infinite values");
    if (!problem.g.allFinite() || (problem.g.array() < 0.0).any())
        throw DataError("fit_path: weights must be finite and nonnegative");
    for (double v : problem.design.columns.values)
        if (!std::isfinite(v)) throw DataError("fit_path: design contains NaN or infinite values");
    if (problem.intercepts.count > 0 && !problem.intercepts.of_row.empty() && problem.intercepts.of_row.size() != n)
        throw UsageError("fit_path: intercept layout length differs from row count");
}

} // namespace

PathResult fit_path(const Problem& problem, const std::vector<double>& grid, const SolverConfig& config,
                    const CoefficientState* warm_start) {
    if (!(config.tol > 0.0)) throw UsageError("fit_path: tol must be positive");
    if (grid.empty()) throw UsageError("fit_path: empty lambda grid");
    for (std::size_t b = 0; b < grid.size(); ++b) {
        if (!(grid[b] >= 0.0) || !std::isfinite(grid[b])) throw UsageError("fit_path: lambda values must be >= 0");
        if (b > 0 && !(grid[b] < grid[b - 1])) throw UsageError("fit_path: lambda grid must be strictly decreasing");
    }
    check_inputs(problem);
    PathSolver solver(problem, config);
    return solver.run(grid, warm_start);
}

void write_path_table(std::ostream& os, const PathResult& path) {
    const auto old = os.precision(17);
    os << "lambda\tobjective\tactive_groups\tkkt_residual\titerations\tconverged\n";
    for (std::size_t b = 0; b < path.lambda_grid.size(); ++b) {
        os << path.lambda_grid[b] << '\t' << path.objectives[b] << '\t' << path.active_groups[b] << '\t'
           << path.kkt_residuals[b] << '\t' << path.iterations[b] << '\t' << (path.converged[b] ? 1 : 0) << '\n';
    }
    os.precision(old);
}

} // namespace mthal
