#pragma once
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace mthal {

/// Compressed sparse columns. An empty `values` array means every stored
/// entry is 1 (binary design); otherwise values align with `row_index`.
struct SparseColumns {
    std::size_t n_rows = 0;
    std::vector<std::size_t> col_ptr{0};
    std::vector<std::uint32_t> row_index;
    std::vector<double> values;

    std::size_t cols() const { return col_ptr.size() - 1; }
    std::size_t nnz() const { return row_index.size(); }
    bool binary() const { return values.empty(); }

    std::span<const std::uint32_t> rows_of(std::size_t c) const {
        return {row_index.data() + col_ptr[c], col_ptr[c + 1] - col_ptr[c]};
    }
    std::span<const double> values_of(std::size_t c) const {
        if (values.empty()) return {};
        return {values.data() + col_ptr[c], col_ptr[c + 1] - col_ptr[c]};
    }

    /// Appends a binary column; rows must be sorted ascending.
    void push_binary(std::span<const std::uint32_t> rows);
    void push_valued(std::span<const std::uint32_t> rows, std::span<const double> vals);

    /// out = A * x
    void multiply(const Eigen::VectorXd& x, Eigen::VectorXd& out) const;
    /// Column dot with a dense vector.
    double dot(std::size_t c, const Eigen::VectorXd& v) const;
    /// v += alpha * column c
    void axpy(std::size_t c, double alpha, Eigen::VectorXd& v) const;

    Eigen::MatrixXd to_dense() const;
};

/// Columns partitioned into contiguous groups: group p owns columns
/// [group_start[p], group_start[p + 1]).
struct GroupedMatrix {
    SparseColumns columns;
    std::vector<std::size_t> group_start{0};

    std::size_t num_groups() const { return group_start.size() - 1; }
    std::size_t group_size(std::size_t p) const { return group_start[p + 1] - group_start[p]; }
};

/// Intercept layout: row r belongs to intercept `of_row[r]`. `count == 0`
/// means no intercept; an empty `of_row` with count 1 means one global intercept.
struct InterceptLayout {
    int count = 1;
    std::vector<int> of_row;

    int index(std::size_t row) const { return of_row.empty() ? 0 : of_row[row]; }
};

} // namespace mthal
