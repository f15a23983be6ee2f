#include "mthal/cv.hpp"

#include <algorithm>
#include <map>
#include <ostream>
#include <random>

#include "mthal/error.hpp"
#include "mthal/parallel.hpp"

namespace mthal {

std::vector<std::size_t> FoldAssignment::validation_rows(int v) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < fold_of_row.size(); ++i)
        if (fold_of_row[i] == v) rows.push_back(i);
    return rows;
}

std::vector<std::size_t> FoldAssignment::training_rows(int v) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < fold_of_row.size(); ++i)
        if (fold_of_row[i] != v) rows.push_back(i);
    return rows;
}

namespace {

FoldAssignment task_balanced(const StackedDataset& data, int folds, std::mt19937_64& rng) {
    FoldAssignment out{std::vector<int>(data.rows(), 0), folds, FoldScheme::kTaskBalanced};
    std::size_t position = 0;
    for (std::size_t k = 0; k < data.num_tasks(); ++k) {
        const std::size_t begin = data.row_offsets[k], end = data.row_offsets[k + 1];
        if (end - begin < static_cast<std::size_t>(folds))
            throw DataError("cannot build " + std::to_string(folds) + " folds: task " +
                            std::to_string(data.task_ids[k]) + " has only " + std::to_string(end - begin) +
                            " rows");
        std::vector<std::size_t> rows(end - begin);
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = begin + i;
        std::shuffle(rows.begin(), rows.end(), rng);
        for (std::size_t r : rows) out.fold_of_row[r] = static_cast<int>(position++ % folds);
    }
    return out;
}

FoldAssignment clustered(const StackedDataset& data, int folds, std::mt19937_64& rng) {
    if (!data.has_clusters()) throw UsageError("clustered folds need cluster ids");
    std::map<std::int64_t, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < data.rows(); ++i) members[data.cluster_ids[i]].push_back(i);
    if (members.size() < static_cast<std::size_t>(folds))
        throw DataError("cannot build " + std::to_string(folds) + " folds from " +
                        std::to_string(members.size()) + " clusters");

    std::vector<const std::vector<std::size_t>*> order;
    for (const auto& [id, rows] : members) order.push_back(&rows);
    std::shuffle(order.begin(), order.end(), rng);
    std::stable_sort(order.begin(), order.end(), [](auto a, auto b) { return a->size() > b->size(); });

    FoldAssignment out{std::vector<int>(data.rows(), 0), folds, FoldScheme::kClustered};
    for (std::size_t c = 0; c < order.size(); ++c)
        for (std::size_t r : *order[c]) out.fold_of_row[r] = static_cast<int>(c % folds);
    return out;
}

} // namespace

FoldAssignment make_folds(const StackedDataset& data, int folds, FoldScheme scheme, std::uint64_t seed) {
    if (folds < 2) throw UsageError("need at least 2 folds, got " + std::to_string(folds));
    std::mt19937_64 rng(seed);
    return scheme == FoldScheme::kClustered ? clustered(data, folds, rng) : task_balanced(data, folds, rng);
}

std::size_t select_index(const std::vector<double>& risk) {
    if (risk.empty()) throw UsageError("select_index: empty risk vector");
    std::size_t best = 0;
    for (std::size_t b = 1; b < risk.size(); ++b)
        if (risk[b] < risk[best]) best = b;
    return best;
}

CvRiskTable cv_select(const StackedDataset& data, const FoldFitter& fitter, const std::vector<double>& grid,
                      const FoldAssignment& folds, unsigned threads) {
    if (grid.empty()) throw UsageError("cv_select: empty lambda grid");
    if (folds.fold_of_row.size() != data.rows()) throw UsageError("fold assignment does not match the data");

    const double total_weight = data.weights.sum();
    const auto task_of_row = data.task_index_of_rows();
    CvRiskTable table;
    table.grid = grid;
    table.fold_risk.assign(folds.folds, std::vector<double>(grid.size(), 0.0));

    parallel_for(static_cast<std::size_t>(folds.folds), threads, [&](std::size_t fold) {
        const int v = static_cast<int>(fold);
        const auto train_rows = folds.training_rows(v);
        const auto valid_rows = folds.validation_rows(v);
        if (valid_rows.empty()) throw DataError("fold " + std::to_string(v) + " is empty");

        std::vector<bool> trained(data.num_tasks(), false);
        for (std::size_t r : train_rows) trained[task_of_row[r]] = true;
        for (std::size_t r : valid_rows)
            if (!trained[task_of_row[r]])
                throw DataError("fold " + std::to_string(v) + " validates task " +
                                std::to_string(data.task_ids[task_of_row[r]]) + " absent from its training rows");

        const auto train = data.subset(train_rows);
        const auto valid = data.subset(valid_rows);
        const double share = train.weights.sum() / total_weight;
        std::vector<double> fold_grid(grid);
        for (double& l : fold_grid) l *= share;

        const Matrix pred = fitter(train, valid, fold_grid);
        if (pred.rows() != valid.outcomes.size() || pred.cols() != static_cast<Eigen::Index>(grid.size()))
            throw UsageError("fold fitter returned a prediction matrix of the wrong shape");
        const double wsum = valid.weights.sum();
        for (std::size_t b = 0; b < grid.size(); ++b) {
            const auto sq = (pred.col(static_cast<Eigen::Index>(b)) - valid.outcomes).array().square();
            table.fold_risk[v][b] = (valid.weights.array() * sq).sum() / wsum;
        }
    });

    table.mean_risk.assign(grid.size(), 0.0);
    for (const auto& fr : table.fold_risk)
        for (std::size_t b = 0; b < grid.size(); ++b) table.mean_risk[b] += fr[b] / folds.folds;
    table.selected = select_index(table.mean_risk);
    return table;
}

void write_risk_table(std::ostream& os, const CvRiskTable& table) {
    os << "lambda\tmean_risk";
    for (std::size_t v = 0; v < table.fold_risk.size(); ++v) os << "\tfold" << v + 1;
    os << '\n';
    const auto old = os.precision(17);
    for (std::size_t b = 0; b < table.grid.size(); ++b) {
        os << table.grid[b] << '\t' << table.mean_risk[b];
        for (const auto& fr : table.fold_risk) os << '\t' << fr[b];
        os << '\n';
    }
    os.precision(old);
}

} // namespace mthal
