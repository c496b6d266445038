#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vsprefill/matrix.hpp"
#include "vsprefill/merge.hpp"
#include "vsprefill/numerics.hpp"

namespace vsp {

// Causal attention instance: Q, K, V share n and d, logits are scaled by
// 1/sqrt(d).
struct AttentionInputs {
    Matrix q;
    Matrix k;
    Matrix v;
    bool causal = true;  // decoder-style throughout; kept explicit for clarity
    double scale = 0.0;

    AttentionInputs(Matrix q_in, Matrix k_in, Matrix v_in)
        : q(std::move(q_in)), k(std::move(k_in)), v(std::move(v_in)) {
        require(q.cols == k.cols && k.cols == v.cols, "attention inputs: head dims differ");
        require(q.rows == k.rows && k.rows == v.rows, "attention inputs: lengths differ");
        require(q.rows >= 1, "attention inputs: empty sequence");
        scale = 1.0 / std::sqrt(static_cast<double>(q.cols));
    }

    std::size_t n() const { return q.rows; }
    std::size_t d() const { return q.cols; }
};

// Sparse pattern: vertical column indices and slash offsets (i - j values),
// both strictly ascending. Offset o covers the diagonal {(i, j) : i - j = o}.
struct SparsePattern {
    std::vector<std::size_t> i_v;
    std::vector<std::size_t> i_s;
};

struct AttentionOutput {
    Matrix o;
    std::optional<Matrix> a;  // materialized only on request
};

// Dense causal attention weights: row i is softmax over logits q_i . k_j * scale
// for j <= i, exactly zero above the diagonal.
inline Matrix attention_matrix(const Matrix& q, const Matrix& k) {
    require(q.cols == k.cols, "attention_matrix: Q/K dim mismatch");
    require(q.rows == k.rows, "attention_matrix: Q/K length mismatch");
    const std::size_t n = q.rows;
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols));
    Matrix a(n, n);
    std::vector<double> logits(n);
    for (std::size_t i = 0; i < n; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j <= i; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < q.cols; ++c) dot += q(i, c) * k(j, c);
            logits[j] = dot * scale;
            if (logits[j] > m) m = logits[j];
        }
        double denom = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
            logits[j] = std::exp(logits[j] - m);
            denom += logits[j];
        }
        for (std::size_t j = 0; j <= i; ++j) a(i, j) = logits[j] / denom;
    }
    return a;
}

// Weight materialization is opt-in and capped: an n x n buffer at large n is
// almost always a mistake.
inline constexpr std::size_t kDefaultWeightsCap = 4096;

inline AttentionOutput full_attention(const AttentionInputs& in, bool keep_weights = false,
                                      std::size_t weights_cap = kDefaultWeightsCap) {
    if (keep_weights && in.n() > weights_cap) {
        throw std::invalid_argument("full_attention: weight materialization above cap");
    }
    const Matrix a = attention_matrix(in.q, in.k);
    AttentionOutput out;
    out.o = matmul(a, in.v);
    if (keep_weights) out.a = a;
    return out;
}

// FlashAttention-style streaming evaluation: square tiles of the score matrix,
// one running max and rescaled denominator/accumulator pair per row. Never
// holds more than one tile of logits; output matches full_attention.
inline AttentionOutput blockwise_attention(const AttentionInputs& in, std::size_t block) {
    require(block >= 1, "blockwise_attention: block must be >= 1");
    const std::size_t n = in.n();
    const std::size_t dv = in.v.cols;
    const std::size_t bs = block < n ? block : n;

    Matrix acc(n, dv);
    std::vector<double> row_max(n, -std::numeric_limits<double>::infinity());
    std::vector<double> row_denom(n, 0.0);
    std::vector<double> tile(bs * bs);

    for (std::size_t i0 = 0; i0 < n; i0 += bs) {
        const std::size_t i1 = std::min(i0 + bs, n);
        for (std::size_t j0 = 0; j0 < i1; j0 += bs) {
            const std::size_t j1 = std::min(j0 + bs, n);
            for (std::size_t i = std::max(i0, j0); i < i1; ++i) {
                const std::size_t jend = std::min(j1, i + 1);
                double tile_max = -std::numeric_limits<double>::infinity();
                for (std::size_t j = j0; j < jend; ++j) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < in.q.cols; ++c) dot += in.q(i, c) * in.k(j, c);
                    tile[j - j0] = dot * in.scale;
                    tile_max = std::max(tile_max, tile[j - j0]);
                }
                if (tile_max > row_max[i]) {
                    const double rescale = std::exp(row_max[i] - tile_max);
                    row_denom[i] *= rescale;
                    double* ai = acc.row_ptr(i);
                    for (std::size_t c = 0; c < dv; ++c) ai[c] *= rescale;
                    row_max[i] = tile_max;
                }
                double* ai = acc.row_ptr(i);
                for (std::size_t j = j0; j < jend; ++j) {
                    const double w = std::exp(tile[j - j0] - row_max[i]);
                    row_denom[i] += w;
                    const double* vj = in.v.row_ptr(j);
                    for (std::size_t c = 0; c < dv; ++c) ai[c] += w * vj[c];
                }
            }
        }
    }
    AttentionOutput out;
    out.o = Matrix(n, dv);
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = acc.row_ptr(i);
        double* oi = out.o.row_ptr(i);
        for (std::size_t c = 0; c < dv; ++c) oi[c] = ai[c] / row_denom[i];
    }
    return out;
}

// Attention restricted to the vertical/slash pattern. Per row, covered columns
// come from merge_row_columns on the fly (no n x n mask) and are streamed in
// blocks with the same online-softmax rescaling as blockwise_attention.
inline AttentionOutput sparse_attention(const AttentionInputs& in, const SparsePattern& pat,
                                        std::size_t block = 32) {
    require(block >= 1, "sparse_attention: block must be >= 1");
    const std::size_t n = in.n();
    const std::size_t dv = in.v.cols;
    AttentionOutput out;
    out.o = Matrix(n, dv);
    std::vector<double> acc(dv);
    std::vector<double> logits(block);
    for (std::size_t i = 0; i < n; ++i) {
        const std::vector<std::size_t> cols = merge_row_columns(pat.i_v, pat.i_s, i);
        if (cols.empty()) {
            throw std::invalid_argument("uncovered query row " + std::to_string(i));
        }
        double m = -std::numeric_limits<double>::infinity();
        double denom = 0.0;
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t start = 0; start < cols.size(); start += block) {
            const std::size_t end = std::min(start + block, cols.size());
            double block_max = -std::numeric_limits<double>::infinity();
            for (std::size_t t = start; t < end; ++t) {
                const std::size_t j = cols[t];
                double dot = 0.0;
                for (std::size_t c = 0; c < in.q.cols; ++c) dot += in.q(i, c) * in.k(j, c);
                logits[t - start] = dot * in.scale;
                block_max = std::max(block_max, logits[t - start]);
            }
            if (block_max > m) {
                const double rescale = std::exp(m - block_max);
                denom *= rescale;
                for (double& x : acc) x *= rescale;
                m = block_max;
            }
            for (std::size_t t = start; t < end; ++t) {
                const double w = std::exp(logits[t - start] - m);
                denom += w;
                const double* vj = in.v.row_ptr(cols[t]);
                for (std::size_t c = 0; c < dv; ++c) acc[c] += w * vj[c];
            }
        }
        double* oi = out.o.row_ptr(i);
        for (std::size_t c = 0; c < dv; ++c) oi[c] = acc[c] / denom;
    }
    return out;
}

// Fraction of total attention mass the pattern covers:
// (1/n) sum_i sum_{j covered in row i} A[i, j].
inline double attention_recall(const Matrix& a, const SparsePattern& pat) {
    require(a.rows == a.cols, "attention_recall: A must be square");
    for (std::size_t i = 0; i < a.rows; ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j <= i; ++j) row_sum += a(i, j);
        if (std::fabs(row_sum - 1.0) > 1e-6) {
            throw std::invalid_argument("attention_recall: row " + std::to_string(i) +
                                        " does not sum to 1");
        }
    }
    double total = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j : merge_row_columns(pat.i_v, pat.i_s, i)) {
            total += a(i, j);
        }
    }
    return total / static_cast<double>(a.rows);
}

}  // namespace vsp
