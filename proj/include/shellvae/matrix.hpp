// Dense row-major matrix used as the universal data carrier (one row = one
// sample) and as MLP weight storage. 64-bit floats throughout; all
// reductions run sequentially in index order so results are independent of
// any internal batching.

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace shellvae {

struct Matrix {
    std::size_t rows{0};
    std::size_t cols{0};
    std::vector<double> v;  // row-major, v[i * cols + j]

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}

    double& at(std::size_t i, std::size_t j) { return v[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return v[i * cols + j]; }

    double* row(std::size_t i) { return v.data() + i * cols; }
    const double* row(std::size_t i) const { return v.data() + i * cols; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// Samples are carried as row-major N x d matrices.
using DataMatrix = Matrix;
using Vec = std::vector<double>;

inline bool all_finite(const Matrix& m) {
    for (double x : m.v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

inline bool all_finite(const Vec& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

inline double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline double squared_norm(const double* a, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * a[i];
    return s;
}

inline double squared_distance(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// Euclidean norm of each row.
inline Vec row_norms(const DataMatrix& data) {
    Vec out(data.rows);
    for (std::size_t i = 0; i < data.rows; ++i) {
        out[i] = std::sqrt(squared_norm(data.row(i), data.cols));
    }
    return out;
}

// Per-column mean, summed in row index order.
inline Vec column_means(const DataMatrix& data) {
    require(data.rows >= 1, "column_means: empty matrix");
    Vec mean(data.cols, 0.0);
    for (std::size_t i = 0; i < data.rows; ++i) {
        const double* r = data.row(i);
        for (std::size_t j = 0; j < data.cols; ++j) mean[j] += r[j];
    }
    for (std::size_t j = 0; j < data.cols; ++j) mean[j] /= static_cast<double>(data.rows);
    return mean;
}

// Copy of the selected rows, in the order given.
inline DataMatrix gather_rows(const DataMatrix& data, const std::vector<std::size_t>& idx) {
    DataMatrix out(idx.size(), data.cols);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const double* src = data.row(idx[i]);
        double* dst = out.row(i);
        for (std::size_t j = 0; j < data.cols; ++j) dst[j] = src[j];
    }
    return out;
}

}  // namespace shellvae
