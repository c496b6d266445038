#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace vsp {

// Dense row-major matrix of doubles. The one tensor carrier used everywhere:
// Q/K/V blocks, attention weights, indexer parameters.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> d)
        : rows(r), cols(c), data(std::move(d)) {
        if (data.size() != rows * cols) {
            throw std::invalid_argument("matrix data length does not match rows*cols");
        }
    }

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row_ptr(std::size_t i) { return data.data() + i * cols; }
    const double* row_ptr(std::size_t i) const { return data.data() + i * cols; }

    bool same_shape(const Matrix& other) const {
        return rows == other.rows && cols == other.cols;
    }
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

inline bool all_finite(const Matrix& m) {
    for (double v : m.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

inline void require_finite(const Matrix& m, const char* what) {
    if (!all_finite(m)) {
        throw std::invalid_argument(std::string(what) + " contains non-finite entries");
    }
}

// C = A * B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols == b.rows, "matmul: inner dimensions differ");
    Matrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ai = a.row_ptr(i);
        double* ci = c.row_ptr(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = ai[k];
            const double* bk = b.row_ptr(k);
            for (std::size_t j = 0; j < b.cols; ++j) {
                ci[j] += aik * bk[j];
            }
        }
    }
    return c;
}

// C = A^T * B, without forming A^T
inline Matrix matmul_transpose_a(const Matrix& a, const Matrix& b) {
    require(a.rows == b.rows, "matmul_transpose_a: row counts differ");
    Matrix c(a.cols, b.cols);
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* ak = a.row_ptr(k);
        const double* bk = b.row_ptr(k);
        for (std::size_t i = 0; i < a.cols; ++i) {
            double* ci = c.row_ptr(i);
            const double aki = ak[i];
            for (std::size_t j = 0; j < b.cols; ++j) {
                ci[j] += aki * bk[j];
            }
        }
    }
    return c;
}

// Column-wise concatenation [A | B].
inline Matrix hconcat(const Matrix& a, const Matrix& b) {
    require(a.rows == b.rows, "hconcat: row counts differ");
    Matrix c(a.rows, a.cols + b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        double* ci = c.row_ptr(i);
        const double* ai = a.row_ptr(i);
        const double* bi = b.row_ptr(i);
        for (std::size_t j = 0; j < a.cols; ++j) ci[j] = ai[j];
        for (std::size_t j = 0; j < b.cols; ++j) ci[a.cols + j] = bi[j];
    }
    return c;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    require(a.same_shape(b), "max_abs_diff: shape mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        worst = std::max(worst, std::fabs(a.data[i] - b.data[i]));
    }
    return worst;
}

}  // namespace vsp
