#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vsprefill/attention.hpp"
#include "vsprefill/matrix.hpp"
#include "vsprefill/rng.hpp"
#include "vsprefill/vsaggregate.hpp"

namespace vsp {

struct BudgetConfig {
    double tau_v = 0.9;
    double tau_s = 0.9;
    std::size_t min_budget = 1;
    std::optional<std::size_t> max_budget;

    void check() const {
        require(tau_v > 0.0 && tau_v <= 1.0, "budget config: tau_v must be in (0, 1]");
        require(tau_s > 0.0 && tau_s <= 1.0, "budget config: tau_s must be in (0, 1]");
        require(min_budget >= 1, "budget config: min_budget must be >= 1");
        if (max_budget) {
            require(min_budget <= *max_budget, "budget config: min_budget exceeds max_budget");
        }
    }
};

struct SelectedIndices {
    std::vector<std::size_t> i_v;
    std::vector<std::size_t> i_s;

    std::size_t k_v() const { return i_v.size(); }
    std::size_t k_s() const { return i_s.size(); }

    SparsePattern pattern() const { return {i_v, i_s}; }
};

// Smallest k whose top-k scores reach cumulative mass tau, then clamped to
// [min_budget, max_budget ∧ n]. The 1e-12 slack absorbs cumulative-sum
// rounding at tau = 1.
inline std::size_t cumulative_budget(const std::vector<double>& scores, double tau,
                                     const BudgetConfig& cfg) {
    cfg.check();
    require(tau > 0.0 && tau <= 1.0, "cumulative_budget: tau must be in (0, 1]");
    require(!scores.empty(), "cumulative_budget: empty scores");
    double total = 0.0;
    for (double s : scores) {
        require(s >= 0.0, "cumulative_budget: negative score");
        total += s;
    }
    require(std::fabs(total - 1.0) <= 1e-6, "cumulative_budget: scores do not sum to 1");

    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    const std::size_t n = scores.size();
    std::size_t k = n;
    double cum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        cum += sorted[i];
        if (cum >= tau - 1e-12) {
            k = i + 1;
            break;
        }
    }
    k = std::max(k, std::min(cfg.min_budget, n));
    std::size_t upper = n;
    if (cfg.max_budget) upper = std::min(upper, *cfg.max_budget);
    return std::min(k, upper);
}

// Indices of the k largest scores; ties go to the smaller index, output is
// ascending. The tie rule makes selection a pure function of (values, indices).
inline std::vector<std::size_t> topk_indices(const std::vector<double>& scores, std::size_t k) {
    const std::size_t n = scores.size();
    require(k >= 1, "topk_indices: k must be >= 1");
    require(k <= n, "topk_indices: k exceeds score count");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&scores](std::size_t x, std::size_t y) {
                          if (scores[x] != scores[y]) return scores[x] > scores[y];
                          return x < y;
                      });
    order.resize(k);
    std::sort(order.begin(), order.end());
    return order;
}

inline void inject_offset_zero(std::vector<std::size_t>& i_s) {
    if (i_s.empty() || i_s.front() != 0) i_s.insert(i_s.begin(), 0);
}

// Budget + top-k per direction. Offset 0 is always injected so every query row
// covers at least itself.
inline SelectedIndices select_pattern(const VSScores& scores, const BudgetConfig& cfg) {
    require(scores.normalized, "select_pattern: scores must be normalized");
    SelectedIndices sel;
    const std::size_t k_v = cumulative_budget(scores.vertical, cfg.tau_v, cfg);
    const std::size_t k_s = cumulative_budget(scores.slash, cfg.tau_s, cfg);
    sel.i_v = topk_indices(scores.vertical, k_v);
    sel.i_s = topk_indices(scores.slash, k_s);
    inject_offset_zero(sel.i_s);
    return sel;
}

// k distinct uniform indices from [0, n), ascending.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                           Rng& rng) {
    require(k <= n, "sample_without_replacement: k exceeds n");
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.next_below(n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

// Uniform baseline pattern. inject_zero mirrors select_pattern's coverage
// guarantee; turn it off when exact-budget coverage accounting matters.
inline SelectedIndices random_pattern(std::size_t n, std::size_t k_v, std::size_t k_s, Rng& rng,
                                      bool inject_zero = true) {
    require(k_v <= n && k_s <= n, "random_pattern: budgets exceed n");
    SelectedIndices sel;
    sel.i_v = sample_without_replacement(n, k_v, rng);
    sel.i_s = sample_without_replacement(n, k_s, rng);
    if (inject_zero) inject_offset_zero(sel.i_s);
    return sel;
}

// Estimate the aggregate profiles from exact softmax rows of a query subset.
// With all rows sampled this is aggregate_naive of the dense weights.
inline VSScores sampling_estimate_rows(const AttentionInputs& in,
                                       const std::vector<std::size_t>& rows) {
    require(!rows.empty(), "sampling_estimate: no rows sampled");
    const std::size_t n = in.n();
    VSScores s;
    s.vertical.assign(n, 0.0);
    s.slash.assign(n, 0.0);
    std::vector<double> logits(n);
    for (std::size_t i : rows) {
        require(i < n, "sampling_estimate: row out of range");
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j <= i; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < in.q.cols; ++c) dot += in.q(i, c) * in.k(j, c);
            logits[j] = dot * in.scale;
            m = std::max(m, logits[j]);
        }
        double denom = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
            logits[j] = std::exp(logits[j] - m);
            denom += logits[j];
        }
        for (std::size_t j = 0; j <= i; ++j) {
            const double w = logits[j] / denom;
            s.vertical[j] += w;
            s.slash[i - j] += w;
        }
    }
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (double& x : s.vertical) x *= inv;
    for (double& x : s.slash) x *= inv;
    s.normalized = true;
    return s;
}

inline VSScores sampling_estimate(const AttentionInputs& in, std::size_t sample_rows, Rng& rng) {
    require(sample_rows >= 1 && sample_rows <= in.n(),
            "sampling_estimate: sample_rows out of range");
    return sampling_estimate_rows(in, sample_without_replacement(in.n(), sample_rows, rng));
}

// ---------------------------------------------------------------------------
// Text interchange format:
//   V: 0 3 17
//   S: 0 16
// One line per direction, indices ascending.

inline void write_indices(std::ostream& os, const SelectedIndices& sel) {
    os << "V:";
    for (std::size_t j : sel.i_v) os << ' ' << j;
    os << "\nS:";
    for (std::size_t o : sel.i_s) os << ' ' << o;
    os << '\n';
}

inline void write_indices(const std::string& path, const SelectedIndices& sel) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    write_indices(os, sel);
}

namespace detail {
inline std::vector<std::size_t> parse_index_line(std::istream& is, const std::string& prefix) {
    std::string line;
    if (!std::getline(is, line)) {
        throw std::runtime_error("indices: missing '" + prefix + "' line");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.compare(0, prefix.size(), prefix) != 0) {
        throw std::runtime_error("indices: expected '" + prefix + "' line, got '" + line + "'");
    }
    std::istringstream rest(line.substr(prefix.size()));
    std::vector<std::size_t> out;
    long long value = 0;
    while (rest >> value) {
        if (value < 0) throw std::runtime_error("indices: negative index on '" + prefix + "' line");
        const auto index = static_cast<std::size_t>(value);
        if (!out.empty() && index <= out.back()) {
            throw std::runtime_error("indices: '" + prefix + "' line not strictly increasing");
        }
        out.push_back(index);
    }
    if (!rest.eof()) {
        throw std::runtime_error("indices: bad token on '" + prefix + "' line");
    }
    return out;
}
}  // namespace detail

inline SelectedIndices read_indices(std::istream& is) {
    SelectedIndices sel;
    sel.i_v = detail::parse_index_line(is, "V:");
    sel.i_s = detail::parse_index_line(is, "S:");
    return sel;
}

inline SelectedIndices read_indices(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open indices file: " + path);
    return read_indices(is);
}

}  // namespace vsp
