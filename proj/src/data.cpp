#include "mthal/data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_map>

#include "mthal/error.hpp"

namespace mthal {

void TaskDataset::validate() const {
    const auto n = outcomes.size();
    const std::string tag = "task " + std::to_string(task_id) + ": ";
    if (covariates.rows() != n) {
        throw DataError(tag + "covariate rows (" + std::to_string(covariates.rows()) +
                        ") != outcome length (" + std::to_string(n) + ")");
    }
    if (static_cast<Eigen::Index>(covariate_names.size()) != covariates.cols()) {
        throw DataError(tag + "covariate name count does not match column count");
    }
    if (weights) {
        if (weights->size() != n) throw DataError(tag + "weight length mismatch");
        if ((weights->array() < 0.0).any() || !weights->allFinite())
            throw DataError(tag + "weights must be finite and nonnegative");
        if (weights->sum() <= 0.0) throw DataError(tag + "weights are all zero");
    }
    if (cluster_ids && static_cast<Eigen::Index>(cluster_ids->size()) != n)
        throw DataError(tag + "cluster id length mismatch");
    for (Eigen::Index j = 0; j < covariates.cols(); ++j) {
        if (covariates.col(j).hasNaN())
            throw DataError(tag + "covariate '" + covariate_names[j] + "' has NaN entries");
    }
    if (outcomes.hasNaN()) throw DataError(tag + "outcomes contain NaN");
}

int StackedDataset::task_index(int task_id) const {
    auto it = std::find(task_ids.begin(), task_ids.end(), task_id);
    return it == task_ids.end() ? -1 : static_cast<int>(it - task_ids.begin());
}

std::vector<int> StackedDataset::task_index_of_rows() const {
    std::vector<int> out(rows());
    for (std::size_t k = 0; k < num_tasks(); ++k)
        for (std::size_t i = row_offsets[k]; i < row_offsets[k + 1]; ++i) out[i] = static_cast<int>(k);
    return out;
}

StackedDataset StackedDataset::subset(const std::vector<std::size_t>& rows_in) const {
    // Keep the task-by-task ordering regardless of the order rows were given in.
    const auto tix = task_index_of_rows();
    std::vector<std::size_t> rows = rows_in;
    std::stable_sort(rows.begin(), rows.end(),
                     [&](std::size_t a, std::size_t b) { return tix[a] < tix[b]; });

    StackedDataset out;
    out.task_ids = task_ids;
    out.covariate_names = covariate_names;
    out.has_covariate = has_covariate;
    const auto n = rows.size();
    out.covariates.resize(static_cast<Eigen::Index>(n), covariates.cols());
    out.outcomes.resize(static_cast<Eigen::Index>(n));
    out.weights.resize(static_cast<Eigen::Index>(n));
    out.task_membership.resize(n);
    out.row_ids.resize(n);
    if (has_clusters()) out.cluster_ids.resize(n);
    out.row_offsets.assign(num_tasks() + 1, 0);
    for (std::size_t r = 0; r < n; ++r) {
        const auto i = rows[r];
        const auto ri = static_cast<Eigen::Index>(r);
        out.covariates.row(ri) = covariates.row(static_cast<Eigen::Index>(i));
        out.outcomes[ri] = outcomes[static_cast<Eigen::Index>(i)];
        out.weights[ri] = weights[static_cast<Eigen::Index>(i)];
        out.task_membership[r] = task_membership[i];
        out.row_ids[r] = row_ids[i];
        if (has_clusters()) out.cluster_ids[r] = cluster_ids[i];
        ++out.row_offsets[static_cast<std::size_t>(tix[i]) + 1];
    }
    for (std::size_t k = 0; k < num_tasks(); ++k) out.row_offsets[k + 1] += out.row_offsets[k];
    return out;
}

std::vector<TaskDataset> StackedDataset::split() const {
    std::vector<TaskDataset> out;
    for (std::size_t k = 0; k < num_tasks(); ++k) {
        TaskDataset t;
        t.task_id = task_ids[k];
        std::vector<Eigen::Index> keep;
        for (std::size_t j = 0; j < cols(); ++j)
            if (has_covariate[k][j]) {
                keep.push_back(static_cast<Eigen::Index>(j));
                t.covariate_names.push_back(covariate_names[j]);
            }
        const auto lo = static_cast<Eigen::Index>(row_offsets[k]);
        const auto nk = static_cast<Eigen::Index>(row_offsets[k + 1] - row_offsets[k]);
        t.covariates.resize(nk, static_cast<Eigen::Index>(keep.size()));
        for (std::size_t c = 0; c < keep.size(); ++c)
            t.covariates.col(static_cast<Eigen::Index>(c)) = covariates.col(keep[c]).segment(lo, nk);
        t.outcomes = outcomes.segment(lo, nk);
        t.weights = weights.segment(lo, nk);
        if (has_clusters())
            t.cluster_ids = std::vector<std::int64_t>(cluster_ids.begin() + lo, cluster_ids.begin() + lo + nk);
        out.push_back(std::move(t));
    }
    return out;
}

StackedDataset stack(const std::vector<TaskDataset>& tasks, WeightScheme scheme) {
    if (tasks.empty()) throw DataError("stack: empty task list");
    std::set<int> seen;
    bool any_clusters = false;
    bool all_clusters = true;
    for (const auto& t : tasks) {
        if (!seen.insert(t.task_id).second)
            throw DataError("stack: duplicate task id " + std::to_string(t.task_id));
        if (t.rows() == 0) throw DataError("stack: task " + std::to_string(t.task_id) + " has zero rows");
        t.validate();
        any_clusters |= t.cluster_ids.has_value();
        all_clusters &= t.cluster_ids.has_value();
    }
    if (any_clusters && !all_clusters) throw DataError("stack: cluster ids present for some tasks only");

    StackedDataset out;
    std::unordered_map<std::string, std::size_t> name_index;
    for (const auto& t : tasks)
        for (const auto& name : t.covariate_names)
            if (name_index.emplace(name, out.covariate_names.size()).second) out.covariate_names.push_back(name);

    std::size_t n = 0;
    for (const auto& t : tasks) n += t.rows();
    const auto d = out.covariate_names.size();
    out.covariates = Matrix::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d),
                                      std::numeric_limits<double>::quiet_NaN());
    out.outcomes.resize(static_cast<Eigen::Index>(n));
    out.weights.resize(static_cast<Eigen::Index>(n));
    out.task_membership.resize(n);
    out.row_ids.resize(n);
    if (any_clusters) out.cluster_ids.resize(n);
    out.row_offsets.push_back(0);

    const double K = static_cast<double>(tasks.size());
    std::size_t offset = 0;
    for (const auto& t : tasks) {
        const auto nk = static_cast<Eigen::Index>(t.rows());
        const auto lo = static_cast<Eigen::Index>(offset);
        out.task_ids.push_back(t.task_id);
        std::vector<bool> has(d, false);
        for (std::size_t c = 0; c < t.covariate_names.size(); ++c) {
            const auto j = name_index.at(t.covariate_names[c]);
            has[j] = true;
            out.covariates.col(static_cast<Eigen::Index>(j)).segment(lo, nk) =
                t.covariates.col(static_cast<Eigen::Index>(c));
        }
        out.has_covariate.push_back(std::move(has));
        out.outcomes.segment(lo, nk) = t.outcomes;
        Vector w = t.weights ? *t.weights : Vector::Ones(nk);
        if (scheme == WeightScheme::kTaskBalanced)
            w *= static_cast<double>(n) / (K * static_cast<double>(nk));
        out.weights.segment(lo, nk) = w;
        for (Eigen::Index i = 0; i < nk; ++i) {
            const auto r = offset + static_cast<std::size_t>(i);
            out.task_membership[r] = t.task_id;
            out.row_ids[r] = r;
            if (any_clusters) out.cluster_ids[r] = (*t.cluster_ids)[static_cast<std::size_t>(i)];
        }
        offset += t.rows();
        out.row_offsets.push_back(offset);
    }
    return out;
}

namespace {

struct ColumnStats {
    double mean = 0.0;
    double sd = 1.0;
    bool constant = false;
};

ColumnStats column_stats(const Eigen::Ref<const Vector>& x) {
    ColumnStats s;
    const auto n = x.size();
    if (n == 0) return s;
    s.mean = x.mean();
    const double ss = (x.array() - s.mean).square().sum();
    const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    if (!(sd > 0.0) || !std::isfinite(sd)) {
        s.constant = true;
        s.sd = 1.0;
    } else {
        s.sd = sd;
    }
    return s;
}

} // namespace

Standardizer standardize_fit(const StackedDataset& train, StandardizeScope scope) {
    if (train.rows() == 0) throw DataError("standardize_fit: empty training data");
    Standardizer s;
    s.scope = scope;
    s.task_ids = train.task_ids;
    s.covariate_names = train.covariate_names;
    const auto K = train.num_tasks();
    const auto d = train.cols();
    s.location.assign(K, std::vector<double>(d, 0.0));
    s.scale.assign(K, std::vector<double>(d, 1.0));
    s.constant.assign(K, std::vector<bool>(d, false));

    if (scope == StandardizeScope::kPooled) {
        for (std::size_t j = 0; j < d; ++j) {
            std::vector<double> vals;
            for (std::size_t i = 0; i < train.rows(); ++i) {
                const double v = train.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                if (!std::isnan(v)) vals.push_back(v);
            }
            const auto st = column_stats(Eigen::Map<const Vector>(vals.data(), static_cast<Eigen::Index>(vals.size())));
            for (std::size_t k = 0; k < K; ++k) {
                s.location[k][j] = st.mean;
                s.scale[k][j] = st.sd;
                s.constant[k][j] = st.constant;
            }
        }
        return s;
    }

    for (std::size_t k = 0; k < K; ++k) {
        const auto lo = static_cast<Eigen::Index>(train.row_offsets[k]);
        const auto nk = static_cast<Eigen::Index>(train.row_offsets[k + 1] - train.row_offsets[k]);
        for (std::size_t j = 0; j < d; ++j) {
            if (!train.has_covariate[k][j] || nk == 0) continue;
            const auto st = column_stats(train.covariates.col(static_cast<Eigen::Index>(j)).segment(lo, nk));
            s.location[k][j] = st.mean;
            s.scale[k][j] = st.sd;
            s.constant[k][j] = st.constant;
        }
    }
    return s;
}

StackedDataset standardize_apply(const Standardizer& s, const StackedDataset& data) {
    if (s.identity()) return data;
    StackedDataset out = data;
    std::vector<std::size_t> col_of(data.cols());
    for (std::size_t j = 0; j < data.cols(); ++j) {
        auto it = std::find(s.covariate_names.begin(), s.covariate_names.end(), data.covariate_names[j]);
        if (it == s.covariate_names.end())
            throw DataError("standardize_apply: covariate '" + data.covariate_names[j] + "' unknown to standardizer");
        col_of[j] = static_cast<std::size_t>(it - s.covariate_names.begin());
    }
    for (std::size_t k = 0; k < data.num_tasks(); ++k) {
        if (data.row_offsets[k + 1] == data.row_offsets[k]) continue;
        auto it = std::find(s.task_ids.begin(), s.task_ids.end(), data.task_ids[k]);
        if (it == s.task_ids.end())
            throw DataError("standardize_apply: task " + std::to_string(data.task_ids[k]) + " unknown to standardizer");
        const auto sk = static_cast<std::size_t>(it - s.task_ids.begin());
        const auto lo = static_cast<Eigen::Index>(data.row_offsets[k]);
        const auto nk = static_cast<Eigen::Index>(data.row_offsets[k + 1] - data.row_offsets[k]);
        for (std::size_t j = 0; j < data.cols(); ++j) {
            auto col = out.covariates.col(static_cast<Eigen::Index>(j)).segment(lo, nk);
            col = (col.array() - s.location[sk][col_of[j]]) / s.scale[sk][col_of[j]];
        }
    }
    return out;
}

} // namespace mthal
