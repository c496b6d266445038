#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "vsprefill/matrix.hpp"

namespace vsp {

// Per-entry allow mask, row-major, same shape as the matrix it masks.
using BoolMask = std::vector<std::uint8_t>;

inline double silu(double x) {
    // x * sigmoid(x), written to avoid overflow for large |x|
    if (x >= 0.0) {
        return x / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return x * e / (1.0 + e);
}

inline double silu_derivative(double x) {
    const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                              : std::exp(x) / (1.0 + std::exp(x));
    return s + x * s * (1.0 - s);
}

// In-place stable softmax over the allowed entries of one row. Disallowed
// entries come out exactly 0. allow may be empty (everything allowed).
inline void softmax_row_inplace(std::span<double> row, std::span<const std::uint8_t> allow) {
    double maxv = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < row.size(); ++j) {
        if (allow.empty() || allow[j]) maxv = std::max(maxv, row[j]);
    }
    if (maxv == -std::numeric_limits<double>::infinity()) {
        throw std::invalid_argument("empty softmax row");
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
        if (allow.empty() || allow[j]) {
            row[j] = std::exp(row[j] - maxv);
            denom += row[j];
        } else {
            row[j] = 0.0;
        }
    }
    for (std::size_t j = 0; j < row.size(); ++j) row[j] /= denom;
}

inline std::vector<double> softmax_vector(const std::vector<double>& logits) {
    std::vector<double> out = logits;
    softmax_row_inplace(out, {});
    return out;
}

// Pull an upstream gradient back through softmax: given p = softmax(logits)
// and u = dL/dp, returns dL/dlogits with entries p_k (u_k - <u, p>).
inline std::vector<double> softmax_backward(const std::vector<double>& pred,
                                            const std::vector<double>& upstream) {
    require(pred.size() == upstream.size(), "softmax_backward: length mismatch");
    double inner = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) inner += upstream[i] * pred[i];
    std::vector<double> out(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        out[i] = pred[i] * (upstream[i] - inner);
    }
    return out;
}

// Row-wise softmax with an optional boolean allow-mask.
inline Matrix softmax_rows(const Matrix& m, const BoolMask* mask = nullptr) {
    if (mask != nullptr) {
        require(mask->size() == m.rows * m.cols, "softmax_rows: mask shape mismatch");
    }
    Matrix out = m;
    for (std::size_t i = 0; i < m.rows; ++i) {
        std::span<const std::uint8_t> allow;
        if (mask != nullptr) {
            allow = std::span<const std::uint8_t>(mask->data() + i * m.cols, m.cols);
        }
        softmax_row_inplace(std::span<double>(out.row_ptr(i), m.cols), allow);
    }
    return out;
}

}  // namespace vsp
