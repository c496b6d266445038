#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "vsprefill/matrix.hpp"

namespace vsp {

// Counter-based deterministic generator. The word stream is the SplitMix64
// sequence seeded with the user seed: word(i) = finalize(seed + (i+1)*GAMMA),
// where finalize is the SplitMix64 avalanche function. Identical seeds give
// identical streams on every platform; there is no hidden global state.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1): 53 random mantissa bits.
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in (0, 1]; safe to pass through log().
    double next_uniform_open() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; the paired value is cached.
    double next_normal() {
        if (cached_) {
            const double v = *cached_;
            cached_.reset();
            return v;
        }
        const double u1 = next_uniform_open();
        const double u2 = next_uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        cached_ = radius * std::sin(angle);
        return radius * std::cos(angle);
    }

    // Unbiased integer in [0, bound) by rejection.
    std::uint64_t next_below(std::uint64_t bound) {
        if (bound == 0) throw std::invalid_argument("next_below: bound must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % bound;
    }

    // Independent child stream; deterministic in (seed, salt).
    Rng derive(std::uint64_t salt) const {
        std::uint64_t z = seed_ ^ (0xD1B54A32D192ED03ull * (salt + 1));
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return Rng(z ^ (z >> 31));
    }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
    std::optional<double> cached_;
};

// Covariance specification for Gaussian sampling: either a diagonal
// (variances) or a full symmetric PSD matrix.
struct Covariance {
    enum class Kind { Diagonal, Full };
    Kind kind = Kind::Diagonal;
    std::vector<double> diag;
    Matrix full;

    static Covariance diagonal(std::vector<double> variances) {
        for (double v : variances) {
            if (!(v >= 0.0)) throw std::invalid_argument("diagonal covariance entries must be >= 0");
        }
        Covariance c;
        c.kind = Kind::Diagonal;
        c.diag = std::move(variances);
        return c;
    }

    static Covariance isotropic(double variance, std::size_t dim) {
        return diagonal(std::vector<double>(dim, variance));
    }

    static Covariance full_matrix(Matrix sigma) {
        require(sigma.rows == sigma.cols, "covariance matrix must be square");
        Covariance c;
        c.kind = Kind::Full;
        c.full = std::move(sigma);
        return c;
    }

    std::size_t dim() const {
        return kind == Kind::Diagonal ? diag.size() : full.rows;
    }
};

// Cholesky factor of a PSD matrix, tolerating zero pivots so degenerate
// covariances (including all-zero) factor cleanly. A significantly negative
// pivot means the input was not PSD.
inline Matrix cholesky_psd(const Matrix& sigma) {
    const std::size_t n = sigma.rows;
    require(sigma.rows == sigma.cols, "cholesky_psd: matrix must be square");
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::fabs(sigma(i, i)));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::fabs(sigma(i, j) - sigma(j, i)) > 1e-12 * std::max(1.0, scale)) {
                throw std::invalid_argument("cholesky_psd: matrix is not symmetric");
            }
        }
    }
    const double tol = 1e-12 * std::max(1.0, scale);
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = sigma(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (d < -tol) {
            throw std::invalid_argument("cholesky_psd: matrix is not positive semidefinite");
        }
        if (d <= tol) {
            l(j, j) = 0.0;
            continue;  // degenerate direction; column stays zero
        }
        l(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = sigma(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    return l;
}

// count i.i.d. draws from N(mean, cov), one per row.
inline Matrix sample_gaussian(const std::vector<double>& mean, const Covariance& cov,
                              std::size_t count, Rng& rng) {
    const std::size_t dim = mean.size();
    require(cov.dim() == dim, "sample_gaussian: covariance dimension mismatch");
    Matrix out(count, dim);
    if (cov.kind == Covariance::Kind::Diagonal) {
        std::vector<double> sd(dim);
        for (std::size_t j = 0; j < dim; ++j) sd[j] = std::sqrt(cov.diag[j]);
        for (std::size_t i = 0; i < count; ++i) {
            double* row = out.row_ptr(i);
            for (std::size_t j = 0; j < dim; ++j) {
                row[j] = mean[j] + sd[j] * rng.next_normal();
            }
        }
        return out;
    }
    const Matrix l = cholesky_psd(cov.full);
    std::vector<double> z(dim);
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t j = 0; j < dim; ++j) z[j] = rng.next_normal();
        double* row = out.row_ptr(i);
        for (std::size_t j = 0; j < dim; ++j) {
            double s = mean[j];
            for (std::size_t k = 0; k <= j; ++k) s += l(j, k) * z[k];
            row[j] = s;
        }
    }
    return out;
}

}  // namespace vsp
