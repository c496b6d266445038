#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "vsprefill/attention.hpp"
#include "vsprefill/matrix.hpp"

namespace vsp {

// Column-mass and diagonal-mass profiles of the causal attention matrix:
//   vertical[j] = sum_i A[i, j]        slash[o] = sum_i A[i, i - o]
// Raw profiles each sum to n (every row of A sums to 1); normalized ones
// divide by n and sum to 1.
struct VSScores {
    std::vector<double> vertical;
    std::vector<double> slash;
    bool normalized = true;

    std::size_t n() const { return vertical.size(); }
};

inline void normalize_scores(VSScores& s) {
    if (s.normalized) return;
    const double inv_n = 1.0 / static_cast<double>(s.n());
    for (double& x : s.vertical) x *= inv_n;
    for (double& x : s.slash) x *= inv_n;
    s.normalized = true;
}

inline VSScores aggregate_naive(const Matrix& a, bool normalized = true) {
    require(a.rows == a.cols, "aggregate_naive: A must be square");
    const std::size_t n = a.rows;
    VSScores s;
    s.normalized = false;
    s.vertical.assign(n, 0.0);
    s.slash.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
            row_sum += a(i, j);
            s.vertical[j] += a(i, j);
            s.slash[i - j] += a(i, j);
        }
        if (std::fabs(row_sum - 1.0) > 1e-6) {
            throw std::invalid_argument("aggregate_naive: row " + std::to_string(i) +
                                        " does not sum to 1");
        }
    }
    if (normalized) normalize_scores(s);
    return s;
}

// Same profiles without materializing A. Two passes over square score tiles:
// the first runs an online softmax per row (running max, rescaled denominator),
// the second re-streams the tiles and adds normalized weights into the two
// profiles. Logits are recomputed rather than cached; memory is O(n + block^2).
inline VSScores aggregate_streaming(const AttentionInputs& in, std::size_t block,
                                    bool normalized = true) {
    require(block >= 1, "aggregate_streaming: block must be >= 1");
    const std::size_t n = in.n();
    const std::size_t bs = block < n ? block : n;

    std::vector<double> row_max(n, -std::numeric_limits<double>::infinity());
    std::vector<double> row_denom(n, 0.0);
    std::vector<double> tile(bs * bs);

    auto fill_tile = [&](std::size_t i0, std::size_t i1, std::size_t j0, std::size_t j1) {
        for (std::size_t i = std::max(i0, j0); i < i1; ++i) {
            const std::size_t jend = std::min(j1, i + 1);
            for (std::size_t j = j0; j < jend; ++j) {
                double dot = 0.0;
                for (std::size_t c = 0; c < in.q.cols; ++c) dot += in.q(i, c) * in.k(j, c);
                tile[(i - i0) * bs + (j - j0)] = dot * in.scale;
            }
        }
    };

    for (std::size_t i0 = 0; i0 < n; i0 += bs) {
        const std::size_t i1 = std::min(i0 + bs, n);
        for (std::size_t j0 = 0; j0 < i1; j0 += bs) {
            const std::size_t j1 = std::min(j0 + bs, n);
            fill_tile(i0, i1, j0, j1);
            for (std::size_t i = std::max(i0, j0); i < i1; ++i) {
                const std::size_t jend = std::min(j1, i + 1);
                double tile_max = -std::numeric_limits<double>::infinity();
                for (std::size_t j = j0; j < jend; ++j) {
                    tile_max = std::max(tile_max, tile[(i - i0) * bs + (j - j0)]);
                }
                if (tile_max > row_max[i]) {
                    row_denom[i] *= std::exp(row_max[i] - tile_max);
                    row_max[i] = tile_max;
                }
                for (std::size_t j = j0; j < jend; ++j) {
                    row_denom[i] += std::exp(tile[(i - i0) * bs + (j - j0)] - row_max[i]);
                }
            }
        }
    }

    VSScores s;
    s.normalized = false;
    s.vertical.assign(n, 0.0);
    s.slash.assign(n, 0.0);
    for (std::size_t i0 = 0; i0 < n; i0 += bs) {
        const std::size_t i1 = std::min(i0 + bs, n);
        for (std::size_t j0 = 0; j0 < i1; j0 += bs) {
            const std::size_t j1 = std::min(j0 + bs, n);
            fill_tile(i0, i1, j0, j1);
            for (std::size_t i = std::max(i0, j0); i < i1; ++i) {
                const std::size_t jend = std::min(j1, i + 1);
                for (std::size_t j = j0; j < jend; ++j) {
                    const double w =
                        std::exp(tile[(i - i0) * bs + (j - j0)] - row_max[i]) / row_denom[i];
                    s.vertical[j] += w;
                    s.slash[i - j] += w;
                }
            }
        }
    }
    if (normalized) normalize_scores(s);
    return s;
}

// Combine per-head score vectors across a KV group. Mean preserves
// normalization; Sum gives the raw group total.
enum class GroupReduce { Mean, Sum };

inline VSScores combine_scores(const std::vector<VSScores>& heads,
                               GroupReduce reduce = GroupReduce::Mean) {
    require(!heads.empty(), "combine_scores: no heads");
    const std::size_t n = heads.front().n();
    VSScores out;
    out.normalized = heads.front().normalized;
    out.vertical.assign(n, 0.0);
    out.slash.assign(n, 0.0);
    for (const VSScores& h : heads) {
        require(h.n() == n && h.slash.size() == n, "combine_scores: length mismatch");
        require(h.normalized == out.normalized, "combine_scores: mixed raw/normalized inputs");
        for (std::size_t i = 0; i < n; ++i) {
            out.vertical[i] += h.vertical[i];
            out.slash[i] += h.slash[i];
        }
    }
    if (reduce == GroupReduce::Mean) {
        const double inv = 1.0 / static_cast<double>(heads.size());
        for (double& x : out.vertical) x *= inv;
        for (double& x : out.slash) x *= inv;
    } else {
        out.normalized = false;
    }
    return out;
}

}  // namespace vsp
