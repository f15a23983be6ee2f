#include "mthal/sparse.hpp"

namespace mthal {

void SparseColumns::push_binary(std::span<const std::uint32_t> rows) {
    row_index.insert(row_index.end(), rows.begin(), rows.end());
    col_ptr.push_back(row_index.size());
}

void SparseColumns::push_valued(std::span<const std::uint32_t> rows, std::span<const double> vals) {
    if (values.empty() && !row_index.empty()) values.assign(row_index.size(), 1.0);
    row_index.insert(row_index.end(), rows.begin(), rows.end());
    values.insert(values.end(), vals.begin(), vals.end());
    col_ptr.push_back(row_index.size());
}

void SparseColumns::multiply(const Eigen::VectorXd& x, Eigen::VectorXd& out) const {
    out.setZero(static_cast<Eigen::Index>(n_rows));
    for (std::size_t c = 0; c < cols(); ++c) {
        const double xc = x[static_cast<Eigen::Index>(c)];
        if (xc != 0.0) axpy(c, xc, out);
    }
}

double SparseColumns::dot(std::size_t c, const Eigen::VectorXd& v) const {
    double s = 0.0;
    const auto lo = col_ptr[c];
    const auto hi = col_ptr[c + 1];
    if (values.empty()) {
        for (auto e = lo; e < hi; ++e) s += v[row_index[e]];
    } else {
        for (auto e = lo; e < hi; ++e) s += values[e] * v[row_index[e]];
    }
    return s;
}

void SparseColumns::axpy(std::size_t c, double alpha, Eigen::VectorXd& v) const {
    const auto lo = col_ptr[c];
    const auto hi = col_ptr[c + 1];
    if (values.empty()) {
        for (auto e = lo; e < hi; ++e) v[row_index[e]] += alpha;
    } else {
        for (auto e = lo; e < hi; ++e) v[row_index[e]] += alpha * values[e];
    }
}

Eigen::MatrixXd SparseColumns::to_dense() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(cols()));
    for (std::size_t c = 0; c < cols(); ++c)
        for (auto e = col_ptr[c]; e < col_ptr[c + 1]; ++e)
            m(row_index[e], static_cast<Eigen::Index>(c)) = values.empty() ? 1.0 : values[e];
    return m;
}

} // namespace mthal
