#pragma once
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "dipanet/errors.hpp"

namespace dipanet {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. Small and allocation-explicit; this
// library only needs matvec, norms and elementwise access.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> vals)
        : rows_(rows), cols_(cols), data_(vals) {
        if (data_.size() != rows * cols) throw StructuralError("Matrix: initializer size mismatch");
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::span<double> flat() { return {data_.data(), data_.size()}; }
    std::span<const double> flat() const { return {data_.data(), data_.size()}; }

    bool operator==(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    Vec data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline double norm2_diff(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

// Frobenius norm; coincides with norm2 on the flattened entries.
inline double frobenius(const Matrix& m) { return norm2(m.flat()); }

inline void matvec(const Matrix& m, std::span<const double> x, std::span<double> out) {
    if (m.cols() != x.size() || m.rows() != out.size())
        throw StructuralError("matvec: dimension mismatch");
    for (std::size_t i = 0; i < m.rows(); ++i) out[i] = dot(m.row(i), x);
}

inline Vec matvec(const Matrix& m, std::span<const double> x) {
    Vec out(m.rows());
    matvec(m, x, out);
    return out;
}

inline bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

} // namespace dipanet
