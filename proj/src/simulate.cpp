#include "mthal/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "mthal/error.hpp"
#include "mthal/parallel.hpp"

namespace mthal {

double DgpConfig::sparsity_fraction() const { return sparsity == SparsityLevel::kHigh ? 0.6 : 0.2; }

void DgpConfig::validate() const {
    if (d < 1) throw UsageError("dgp: d must be at least 1");
    if (K < 1) throw UsageError("dgp: K must be at least 1");
    if (n_per_task.size() != static_cast<std::size_t>(K))
        throw UsageError("dgp: n_per_task has " + std::to_string(n_per_task.size()) + " entries for " +
                         std::to_string(K) + " tasks");
    for (int n : n_per_task)
        if (n < 1) throw UsageError("dgp: every task needs at least one row");
    if (test_per_task < 1) throw UsageError("dgp: test_per_task must be positive");
    if (!(noise_sd >= 0.0) || !(noise_coef >= 0.0)) throw UsageError("dgp: noise settings must be nonnegative");
}

DgpConfig dgp_preset(const std::string& name) {
    DgpConfig c;
    c.name = name;
    std::string rest = name;
    if (rest.rfind("HN", 0) == 0) {
        c.family = DgpFamily::kHighDimNonlinear;
        c.d = 20;
        rest = rest.substr(2);
    } else if (!rest.empty() && rest[0] == 'N') {
        c.family = DgpFamily::kNonlinear;
        rest = rest.substr(1);
    } else if (!rest.empty() && rest[0] == 'L') {
        c.family = DgpFamily::kLinear;
        rest = rest.substr(1);
    } else {
        throw UsageError("unknown simulation setup '" + name + "'");
    }
    if (rest.size() != 2 || (rest[0] != 'H' && rest[0] != 'L') || (rest[1] != 'S' && rest[1] != 'D'))
        throw UsageError("unknown simulation setup '" + name + "'");
    c.sparsity = rest[0] == 'H' ? SparsityLevel::kHigh : SparsityLevel::kLow;
    c.sharing = rest[1] == 'S' ? Sharing::kSame : Sharing::kDifferent;
    return c;
}

std::vector<int> split_sizes(int n_total, const std::vector<int>& proportions) {
    const double total = std::accumulate(proportions.begin(), proportions.end(), 0.0);
    std::vector<int> out;
    int used = 0;
    for (std::size_t k = 0; k < proportions.size(); ++k) {
        int n = k + 1 == proportions.size() ? n_total - used
                                            : static_cast<int>(std::lround(n_total * proportions[k] / total));
        n = std::max(n, 2);
        out.push_back(n);
        used += n;
    }
    return out;
}

double apply_transform(int transform, double x) {
    switch (transform) {
    case 0: return std::log1p(std::abs(x));
    case 1: return std::cos(x);
    case 2: return x * x;
    case 3: return std::exp(x / 2.0);
    default: return x;
    }
}

double TaskTruth::evaluate(std::span<const double> w) const {
    double v = 0.0;
    for (const auto& t : terms) {
        if (t.covariates.size() == 1) {
            v += t.coefficient * apply_transform(t.transform, w[static_cast<std::size_t>(t.covariates[0])]);
        } else {
            double prod = 1.0;
            for (int j : t.covariates) prod *= w[static_cast<std::size_t>(j)];
            v += t.coefficient * prod;
        }
    }
    return v;
}

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t rep, std::uint64_t stream) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(seed) ^ rep) ^ stream);
}

namespace {

std::vector<std::string> covariate_names(int d) {
    std::vector<std::string> names;
    for (int j = 0; j < d; ++j) names.push_back("x" + std::to_string(j + 1));
    return names;
}

/// Admissible support sizes under "different" sharing: zero counts z with
/// z/d inside the deviation range, keeping at least one active covariate.
std::vector<int> support_sizes(const DgpConfig& cfg) {
    const double lo = cfg.sparsity == SparsityLevel::kHigh ? 0.4 : 0.05;
    const double hi = cfg.sparsity == SparsityLevel::kHigh ? 0.8 : 0.4;
    std::vector<int> sizes;
    for (int z = 0; z < cfg.d; ++z) {
        const double f = static_cast<double>(z) / cfg.d;
        if (f >= lo && f <= hi) sizes.push_back(cfg.d - z);
    }
    if (sizes.empty()) sizes.push_back(static_cast<int>(std::ceil((1.0 - cfg.sparsity_fraction()) * cfg.d)));
    return sizes;
}

std::vector<int> pick_support(int d, int size, std::mt19937_64& rng) {
    std::vector<int> all(static_cast<std::size_t>(d));
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(static_cast<std::size_t>(size));
    std::sort(all.begin(), all.end());
    return all;
}

TaskTruth make_truth(const DgpConfig& cfg, int task_id, std::vector<int> support, std::mt19937_64& rng) {
    if (support.empty()) throw UsageError("dgp: support size is zero");
    std::normal_distribution<double> normal;
    TaskTruth t;
    t.task_id = task_id;
    t.support = std::move(support);
    const bool nonlinear = cfg.family != DgpFamily::kLinear;
    const int library = cfg.family == DgpFamily::kHighDimNonlinear ? 4 : 3;
    for (int j : t.support) t.terms.push_back({{j}, nonlinear ? j % library : -1, normal(rng)});
    const bool products = nonlinear || cfg.sparsity == SparsityLevel::kLow;
    if (products)
        for (std::size_t m = 0; m + 1 < t.support.size(); m += 2)
            t.terms.push_back({{t.support[m], t.support[m + 1]}, -1, normal(rng)});
    return t;
}

} // namespace

std::vector<TaskDataset> draw_tasks(const DgpConfig& cfg, const std::vector<TaskTruth>& truth,
                                    const std::vector<int>& n_per_task, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::bernoulli_distribution coin(0.5);
    std::uniform_int_distribution<int> level(0, 2);
    std::normal_distribution<double> noise(0.0, cfg.noise_sd);
    const auto names = covariate_names(cfg.d);

    std::vector<TaskDataset> out;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        TaskDataset t;
        t.task_id = truth[k].task_id;
        t.covariate_names = names;
        const int n = n_per_task[k];
        t.covariates.resize(n, cfg.d);
        t.outcomes.resize(n);
        std::vector<double> row(static_cast<std::size_t>(cfg.d));
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < cfg.d; ++j) {
                double v;
                if (j == 0) v = coin(rng) ? 1.0 : 0.0;
                else if (j == 1) v = level(rng);
                else v = normal(rng);
                row[static_cast<std::size_t>(j)] = v;
                t.covariates(i, j) = v;
            }
            t.outcomes[i] = truth[k].evaluate(row) + cfg.noise_coef * noise(rng);
        }
        out.push_back(std::move(t));
    }
    return out;
}

SimReplicate gen_replicate(const DgpConfig& cfg, std::uint64_t rep) {
    cfg.validate();
    SimReplicate r;
    std::mt19937_64 rng(sub_seed(cfg.seed, rep, 0));
    const int shared_size = static_cast<int>(std::ceil((1.0 - cfg.sparsity_fraction()) * cfg.d - 1e-12));
    const auto shared = pick_support(cfg.d, shared_size, rng);
    const auto sizes = support_sizes(cfg);
    std::uniform_int_distribution<std::size_t> pick(0, sizes.size() - 1);
    for (int k = 0; k < cfg.K; ++k) {
        auto support = cfg.sharing == Sharing::kSame ? shared : pick_support(cfg.d, sizes[pick(rng)], rng);
        r.truth.push_back(make_truth(cfg, k + 1, std::move(support), rng));
    }
    for (const auto& t : r.truth)
        for (int j : t.support) r.true_support.emplace(t.task_id, j);
    r.train = draw_tasks(cfg, r.truth, cfg.n_per_task, sub_seed(cfg.seed, rep, 1));
    r.test = draw_tasks(cfg, r.truth, std::vector<int>(static_cast<std::size_t>(cfg.K), cfg.test_per_task),
                        sub_seed(cfg.seed, rep, 2));
    return r;
}

Vector SimReplicate::signal(const StackedDataset& rows) const {
    const auto d = static_cast<int>(truth.empty() ? 0 : train.front().covariate_names.size());
    const auto names = covariate_names(d);
    std::vector<Eigen::Index> pos;
    for (const auto& n : names) {
        auto it = std::find(rows.covariate_names.begin(), rows.covariate_names.end(), n);
        if (it == rows.covariate_names.end()) throw DataError("signal: covariate '" + n + "' missing");
        pos.push_back(it - rows.covariate_names.begin());
    }
    Vector out(static_cast<Eigen::Index>(rows.rows()));
    std::vector<double> w(static_cast<std::size_t>(d));
    for (std::size_t k = 0; k < rows.num_tasks(); ++k) {
        auto it = std::find_if(truth.begin(), truth.end(), [&](const TaskTruth& t) { return t.task_id == rows.task_ids[k]; });
        if (rows.row_offsets[k] == rows.row_offsets[k + 1]) continue;
        if (it == truth.end()) throw DataError("signal: unknown task " + std::to_string(rows.task_ids[k]));
        for (auto i = rows.row_offsets[k]; i < rows.row_offsets[k + 1]; ++i) {
            for (std::size_t j = 0; j < w.size(); ++j) w[j] = rows.covariates(static_cast<Eigen::Index>(i), pos[j]);
            out[static_cast<Eigen::Index>(i)] = it->evaluate(w);
        }
    }
    return out;
}

Method mthal_method(const EstimatorConfig& config) {
    return {"MT-HAL", [config](const SimReplicate& r) {
                const auto model = fit_mthal(r.train, config);
                return MethodOutput{model.predict(stack(r.test)), extract_support(model)};
            }};
}

Method baseline_method(BaselineKind kind, const EstimatorConfig& config) {
    return {kind == BaselineKind::kMtLasso ? "MT-lasso" : "MT-L21", [kind, config](const SimReplicate& r) {
                const auto model = fit_baseline(kind, r.train, config);
                return MethodOutput{model.predict(stack(r.test)), extract_support(model)};
            }};
}

const MethodSummary& SimReport::row(const std::string& method) const {
    for (const auto& r : rows)
        if (r.method == method) return r;
    throw UsageError("no report row for method '" + method + "'");
}

namespace {

struct RepResult {
    bool ok = false;
    double mse = 0.0, precision = 0.0, accuracy = 0.0;
    std::string error;
};

void mean_se(const std::vector<double>& v, double& mean, double& se) {
    mean = se = 0.0;
    if (v.empty()) return;
    mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() < 2) return;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

} // namespace

SimReport run_mc(const DgpConfig& cfg, const std::vector<Method>& methods, int reps, unsigned threads) {
    if (reps < 1) throw UsageError("run_mc: reps must be at least 1");
    cfg.validate();
    std::vector<std::vector<RepResult>> results(static_cast<std::size_t>(reps), std::vector<RepResult>(methods.size()));

    parallel_for(static_cast<std::size_t>(reps), threads, [&](std::size_t rep) {
        const auto r = gen_replicate(cfg, rep);
        const Vector y = stack(r.test).outcomes;
        for (std::size_t m = 0; m < methods.size(); ++m) {
            auto& out = results[rep][m];
            try {
                const auto res = methods[m].run(r);
                out.mse = mse(res.test_prediction, y);
                const auto sm = support_metrics(res.support, r.true_support);
                out.precision = sm.precision;
                out.accuracy = sm.accuracy;
                out.ok = std::isfinite(out.mse);
                if (!out.ok) out.error = "non-finite test MSE";
            } catch (const std::exception& e) {
                out.error = e.what();
            }
        }
    });

    SimReport report;
    for (std::size_t m = 0; m < methods.size(); ++m) {
        MethodSummary s;
        s.setup = cfg.name;
        s.method = methods[m].name;
        std::vector<double> mses, precs, accs;
        for (int rep = 0; rep < reps; ++rep) {
            const auto& r = results[static_cast<std::size_t>(rep)][m];
            if (r.ok) {
                mses.push_back(r.mse);
                precs.push_back(r.precision);
                accs.push_back(r.accuracy);
                s.mse_per_rep.push_back(r.mse);
            } else {
                ++s.failures;
                s.errors.push_back("replicate " + std::to_string(rep) + ": " + r.error);
                s.mse_per_rep.push_back(std::nan(""));
            }
        }
        s.reps_used = mses.size();
        mean_se(mses, s.mse, s.mse_se);
        mean_se(precs, s.precision, s.precision_se);
        mean_se(accs, s.accuracy, s.accuracy_se);
        report.rows.push_back(std::move(s));
    }
    return report;
}

void write_report_tsv(std::ostream& os, const SimReport& report) {
    os << "setup\tmethod\tmse\tmse_se\tprecision\tprecision_se\taccuracy\taccuracy_se\treps_used\tfailures\n";
    const auto old = os.precision(10);
    for (const auto& r : report.rows)
        os << r.setup << '\t' << r.method << '\t' << r.mse << '\t' << r.mse_se << '\t' << r.precision << '\t'
           << r.precision_se << '\t' << r.accuracy << '\t' << r.accuracy_se << '\t' << r.reps_used << '\t'
           << r.failures << '\n';
    os.precision(old);
}

void write_report_table(std::ostream& os, const SimReport& report) {
    auto fixed = [](double v, int digits) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(digits) << v;
        return s.str();
    };
    os << std::left << std::setw(8) << "Setup" << std::setw(10) << "Method" << std::right << std::setw(18) << "MSE"
       << std::setw(10) << "Prec %" << std::setw(10) << "Accu %" << '\n';
    for (const auto& r : report.rows) {
        const std::string mse = fixed(r.mse, 3) + " (" + fixed(r.mse_se, 3) + ")";
        os << std::left << std::setw(8) << r.setup << std::setw(10) << r.method << std::right << std::setw(18) << mse
           << std::setw(10) << fixed(r.precision, 1) << std::setw(10) << fixed(r.accuracy, 1) << '\n';
    }
}

} // namespace mthal
