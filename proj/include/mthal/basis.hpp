#pragma once
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mthal/data.hpp"
#include "mthal/sparse.hpp"

namespace mthal {

/// Covariate subset s, 0-based indices sorted ascending.
struct Section {
    std::vector<int> covariates;

    std::size_t degree() const { return covariates.size(); }
    bool contains(int j) const;
    friend bool operator==(const Section&, const Section&) = default;
};

/// Zero-order indicator basis 1(knot <= w_s), coordinatewise with an
/// inclusive boundary.
struct BasisFunction {
    Section section;
    std::vector<double> knot;       // aligned with section.covariates
    std::size_t source_row = 0;     // row id of the knot donor
};

/// All nonempty subsets of {0..d-1} of size <= max_degree, ordered by
/// (cardinality, lexicographic).
std::vector<Section> enumerate_sections(int d, int max_degree);

/// `w` is a full covariate row indexed by covariate position.
int evaluate_basis(const BasisFunction& b, std::span<const double> w);

/// Sorted knot values per covariate.
struct KnotSet {
    std::vector<std::vector<double>> per_covariate;
};

/// `per_covariate_max == 0` keeps every distinct observed value.
KnotSet select_knots(const StackedDataset& train, int per_covariate_max);

struct BasisConfig {
    int max_degree = 3;               // clamped to d
    int per_covariate_max = 50;       // 0: all observed values
    bool task_interaction = true;
    bool deduplicate = true;
    bool prune = true;
    std::size_t column_budget = 2'000'000;
    unsigned threads = 1;             // section-parallel candidate generation
};

/// Sparse binary design with one column per (basis, supporting task);
/// the columns of a basis form one penalty group.
struct GroupedDesign {
    GroupedMatrix matrix;
    std::vector<BasisFunction> catalog;                  // one per group
    std::vector<std::vector<BasisFunction>> aliases;     // bases merged into each group
    std::vector<int> column_task;                        // task index per column, -1 when shared
    std::vector<int> task_ids;
    std::vector<std::string> covariate_names;
    std::vector<std::vector<bool>> has_covariate;
    bool task_interaction = true;
    bool intercept = true;

    std::size_t num_groups() const { return matrix.num_groups(); }
    std::size_t num_columns() const { return matrix.columns.cols(); }
    std::size_t group_of_column(std::size_t c) const;
};

GroupedDesign build_design(const StackedDataset& train, const std::vector<Section>& sections,
                           const KnotSet& knots, const BasisConfig& config);

/// Convenience: sections + knots + design from one config.
GroupedDesign build_design(const StackedDataset& train, const BasisConfig& config);

/// Evaluates the trained design on new rows. When `columns` is non-empty
/// only those design columns are produced, in the given order.
SparseColumns evaluate_design(const GroupedDesign& design, const StackedDataset& rows,
                              std::span<const std::size_t> columns = {});

/// One line per group: group id, section, knot, donor row, tasks.
void write_catalog(std::ostream& os, const GroupedDesign& design);

struct CatalogEntry {
    std::size_t group = 0;
    BasisFunction basis;
    std::vector<int> task_ids;
};
std::vector<CatalogEntry> read_catalog(std::istream& is);

} // namespace mthal
