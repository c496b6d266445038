#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "vsprefill/matrix.hpp"

namespace vsp {

// Column set that row i actually attends to: verticals j <= i unioned with
// slash columns i - o for offsets o <= i. Both inputs must be strictly
// ascending. Output is ascending and duplicate-free.
//
// The slash side enumerates columns in ascending j by walking offsets from the
// largest usable one downward, so the union is a plain two-pointer merge.
inline std::vector<std::size_t> merge_row_columns(const std::vector<std::size_t>& i_v,
                                                  const std::vector<std::size_t>& i_s,
                                                  std::size_t i) {
    for (std::size_t k = 1; k < i_v.size(); ++k) {
        require(i_v[k - 1] < i_v[k], "merge_row_columns: i_v not strictly ascending");
    }
    for (std::size_t k = 1; k < i_s.size(); ++k) {
        require(i_s[k - 1] < i_s[k], "merge_row_columns: i_s not strictly ascending");
    }

    // First slash offset <= i, scanning from the back (largest offset -> smallest column).
    std::size_t s = i_s.size();
    while (s > 0 && i_s[s - 1] > i) --s;
    // s now counts usable offsets; walk index s-1 .. 0 giving ascending columns.

    std::vector<std::size_t> out;
    out.reserve(i_v.size() + s);
    std::size_t v = 0;
    std::size_t si = s;
    while (true) {
        const bool has_v = v < i_v.size() && i_v[v] <= i;
        const bool has_s = si > 0;
        if (!has_v && !has_s) break;
        const std::size_t cv = has_v ? i_v[v] : 0;
        const std::size_t cs = has_s ? i - i_s[si - 1] : 0;
        if (has_v && (!has_s || cv < cs)) {
            out.push_back(cv);
            ++v;
        } else if (has_s && (!has_v || cs < cv)) {
            out.push_back(cs);
            --si;
        } else {  // equal column from both sides
            out.push_back(cv);
            ++v;
            --si;
        }
    }
    return out;
}

// Balanced p-way partition of the merge of two ascending sequences a and b,
// via merge-path diagonal search. Split s sits at combined position
// floor(s * (|a|+|b|) / p); ties on equal elements resolve a-first, i.e. along
// a diagonal we take the smallest a-count consistent with the merge order.
// Returns p+1 (a_idx, b_idx) cut points; slice s is [cuts[s], cuts[s+1]).
struct MergeCut {
    std::size_t a = 0;
    std::size_t b = 0;
    bool operator==(const MergeCut&) const = default;
};

inline std::vector<MergeCut> merge_path_partition(const std::vector<std::size_t>& a,
                                                  const std::vector<std::size_t>& b,
                                                  std::size_t p) {
    require(p >= 1, "merge_path_partition: p must be >= 1");
    const std::size_t total = a.size() + b.size();
    std::vector<MergeCut> cuts(p + 1);
    cuts[0] = {0, 0};
    cuts[p] = {a.size(), b.size()};
    for (std::size_t s = 1; s < p; ++s) {
        const std::size_t diag = s * total / p;
        // Find smallest ai in [max(0, diag-|b|), min(diag, |a|)] such that
        // a[ai] > b[diag-ai-1] -- the a-first crossing of diagonal `diag`.
        std::size_t lo = diag > b.size() ? diag - b.size() : 0;
        std::size_t hi = diag < a.size() ? diag : a.size();
        while (lo < hi) {
            const std::size_t mid = lo + (hi - lo) / 2;
            // bi = diag - mid - 1 is valid: mid < hi <= diag so diag - mid >= 1.
            if (a[mid] <= b[diag - mid - 1]) {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        cuts[s] = {lo, diag - lo};
    }
    return cuts;
}

// Sequential merge of two ascending sequences, a-first on ties (duplicates kept).
// Oracle partner for merge_path_partition: concatenating per-slice merges over
// the cut points must reproduce this.
inline std::vector<std::size_t> merge_sequences(const std::vector<std::size_t>& a,
                                                const std::vector<std::size_t>& b) {
    std::vector<std::size_t> out;
    out.reserve(a.size() + b.size());
    std::size_t i = 0, j = 0;
    while (i < a.size() || j < b.size()) {
        if (j >= b.size() || (i < a.size() && a[i] <= b[j])) {
            out.push_back(a[i++]);
        } else {
            out.push_back(b[j++]);
        }
    }
    return out;
}

}  // namespace vsp
