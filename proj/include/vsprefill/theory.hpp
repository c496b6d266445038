#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "vsprefill/matrix.hpp"
#include "vsprefill/rng.hpp"
#include "vsprefill/rope.hpp"

namespace vsp {

// Gaussian query/key model: q ~ N(mu_q, sigma_q), k ~ N(mu_k, sigma_k),
// independent of each other, rotated by RoPE at their positions.
struct GaussianQKModel {
    std::vector<double> mu_q;
    std::vector<double> mu_k;
    Covariance sigma_q;
    Covariance sigma_k;
    RopeConfig rope;

    void check() const {
        require(mu_q.size() == rope.head_dim && mu_k.size() == rope.head_dim,
                "gaussian qk model: mean length != head_dim");
        require(sigma_q.dim() == rope.head_dim && sigma_k.dim() == rope.head_dim,
                "gaussian qk model: covariance dim != head_dim");
    }
};

// Per-plane expansion coefficients of the expected logit profile:
//   E[score](delta) = sum_p a_p cos(delta theta_p) - b_p sin(delta theta_p)
//                   = sum_p r_p cos(delta theta_p + alpha_p)
// with r cos(alpha) = a and r sin(alpha) = b (four-quadrant angle).
struct SlashSpectrum {
    std::vector<double> a;
    std::vector<double> b;
    std::vector<double> r;
    std::vector<double> alpha;
};

inline SlashSpectrum slash_spectrum(const GaussianQKModel& model) {
    model.check();
    const std::size_t planes = model.rope.planes();
    SlashSpectrum s;
    s.a.resize(planes);
    s.b.resize(planes);
    s.r.resize(planes);
    s.alpha.resize(planes);
    for (std::size_t p = 0; p < planes; ++p) {
        const double q0 = model.mu_q[2 * p], q1 = model.mu_q[2 * p + 1];
        const double k0 = model.mu_k[2 * p], k1 = model.mu_k[2 * p + 1];
        s.a[p] = q0 * k0 + q1 * k1;
        s.b[p] = q1 * k0 - q0 * k1;
        s.r[p] = std::hypot(s.a[p], s.b[p]);
        s.alpha[p] = std::atan2(s.b[p], s.a[p]);
    }
    return s;
}

// Direct form: sum_p a_p cos(delta theta_p) - b_p sin(delta theta_p).
// delta is the signed relative offset m - n (query position minus key
// position); the profile depends on nothing else.
inline double expected_score(const SlashSpectrum& spec, double delta, const RopeConfig& rope) {
    require(spec.a.size() == rope.planes(), "expected_score: spectrum/rope plane mismatch");
    double sum = 0.0;
    for (std::size_t p = 0; p < spec.a.size(); ++p) {
        const double t = delta * rope.theta(p);
        sum += spec.a[p] * std::cos(t) - spec.b[p] * std::sin(t);
    }
    return sum;
}

// Amplitude-phase form: sum_p r_p cos(delta theta_p + alpha_p). The phase sum
// is compensated (two-sum residual folded through the cosine derivative) so the
// form tracks the direct one to ~1e-12 even at |delta| ~ 1e4, where a naive
// t + alpha loses enough bits to show up.
inline double expected_score_phase(const SlashSpectrum& spec, double delta,
                                   const RopeConfig& rope) {
    require(spec.r.size() == rope.planes(), "expected_score_phase: spectrum/rope plane mismatch");
    double sum = 0.0;
    for (std::size_t p = 0; p < spec.r.size(); ++p) {
        const double t = delta * rope.theta(p);
        const double s = t + spec.alpha[p];
        const double bb = s - t;
        const double err = (t - (s - bb)) + (spec.alpha[p] - bb);
        sum += spec.r[p] * (std::cos(s) - err * std::sin(s));
    }
    return sum;
}

struct McProfile {
    std::vector<std::int64_t> offsets;
    std::vector<double> mean;
    std::vector<double> stderr_;  // standard error of the mean
};

namespace detail {
// Rotate every row of m in place by the same per-plane angles.
inline void rotate_rows(Matrix& m, const std::vector<double>& cos_a,
                        const std::vector<double>& sin_a) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        double* row = m.row_ptr(i);
        for (std::size_t p = 0; p < cos_a.size(); ++p) {
            const double x = row[2 * p], y = row[2 * p + 1];
            row[2 * p] = cos_a[p] * x - sin_a[p] * y;
            row[2 * p + 1] = sin_a[p] * x + cos_a[p] * y;
        }
    }
}
}  // namespace detail

// Empirical mean and standard error of the post-RoPE logit <R(base+delta) q,
// R(base) k> per offset. With common random numbers (the default) the same
// (q, k) draws are reused for every offset, which shrinks profile wiggle;
// independent_draws resamples per offset instead. base shifts both positions
// and must not move the profile beyond floating-point noise.
inline McProfile monte_carlo_score(const GaussianQKModel& model, std::int64_t delta_lo,
                                   std::int64_t delta_hi, std::size_t samples, Rng& rng,
                                   bool independent_draws = false, std::int64_t base = 0) {
    model.check();
    require(delta_lo < delta_hi, "monte_carlo_score: empty offset range");
    require(samples >= 1000, "monte_carlo_score: need at least 1000 samples");
    const std::size_t planes = model.rope.planes();

    McProfile out;
    std::vector<double> cos_q(planes), sin_q(planes), cos_k(planes), sin_k(planes);
    for (std::size_t p = 0; p < planes; ++p) {
        const double ak = static_cast<double>(base) * model.rope.theta(p);
        cos_k[p] = std::cos(ak);
        sin_k[p] = std::sin(ak);
    }

    Matrix q, k;
    if (!independent_draws) {
        q = sample_gaussian(model.mu_q, model.sigma_q, samples, rng);
        k = sample_gaussian(model.mu_k, model.sigma_k, samples, rng);
        detail::rotate_rows(k, cos_k, sin_k);
    }

    for (std::int64_t delta = delta_lo; delta < delta_hi; ++delta) {
        if (independent_draws) {
            q = sample_gaussian(model.mu_q, model.sigma_q, samples, rng);
            k = sample_gaussian(model.mu_k, model.sigma_k, samples, rng);
            detail::rotate_rows(k, cos_k, sin_k);
        }
        for (std::size_t p = 0; p < planes; ++p) {
            const double aq = static_cast<double>(base + delta) * model.rope.theta(p);
            cos_q[p] = std::cos(aq);
            sin_q[p] = std::sin(aq);
        }
        // Welford update: the textbook sum-of-squares form loses all precision
        // when the draws are (nearly) identical, e.g. at zero variance.
        double mean = 0.0, m2 = 0.0;
        for (std::size_t i = 0; i < samples; ++i) {
            const double* qi = q.row_ptr(i);
            const double* ki = k.row_ptr(i);
            double dot = 0.0;
            for (std::size_t p = 0; p < planes; ++p) {
                const double x = cos_q[p] * qi[2 * p] - sin_q[p] * qi[2 * p + 1];
                const double y = sin_q[p] * qi[2 * p] + cos_q[p] * qi[2 * p + 1];
                dot += x * ki[2 * p] + y * ki[2 * p + 1];
            }
            const double d1 = dot - mean;
            mean += d1 / static_cast<double>(i + 1);
            m2 += d1 * (dot - mean);
        }
        const double n = static_cast<double>(samples);
        const double var = m2 / (n - 1.0);
        out.offsets.push_back(delta);
        out.mean.push_back(mean);
        out.stderr_.push_back(std::sqrt(var / n));
    }
    return out;
}

// Inverse design: mean vectors whose expected-score profile peaks near the
// requested offsets. One frequency plane per target, chosen by period match;
// the plane gets amplitude `strength` with phase -T*theta_p, which puts the
// causal peak at delta = T (and its periodic repeats). Planes are assigned
// from the front; reserved_tail_planes stay untouched for callers that park
// other structure in the low-frequency planes.
struct PlantedMeans {
    std::vector<double> mu_q;
    std::vector<double> mu_k;
    std::vector<std::string> warnings;
};

struct PlantTarget {
    std::size_t offset = 0;
    double strength = 1.0;
};

inline PlantedMeans plant_slash_means(const std::vector<PlantTarget>& targets,
                                      const RopeConfig& rope,
                                      std::size_t reserved_tail_planes = 0) {
    const std::size_t planes = rope.planes();
    require(reserved_tail_planes < planes, "plant_slash_means: every plane reserved");
    PlantedMeans out;
    out.mu_q.assign(rope.head_dim, 0.0);
    out.mu_k.assign(rope.head_dim, 0.0);
    const std::size_t usable = planes - reserved_tail_planes;
    const double max_period = 2.0 * std::numbers::pi / rope.theta(usable - 1);

    std::vector<bool> taken(planes, false);
    for (const PlantTarget& target : targets) {
        require(target.strength >= 0.0, "plant_slash_means: strength must be >= 0");
        if (target.strength == 0.0) continue;
        const std::size_t t = target.offset;
        // Period closest to the target in log space; offset 0 wants the
        // slowest usable plane so the aligned boost decays across the window
        // instead of repeating inside it.
        std::size_t best = usable;
        double best_cost = 0.0;
        for (std::size_t p = 0; p < usable; ++p) {
            if (taken[p]) continue;
            const double period = 2.0 * std::numbers::pi / rope.theta(p);
            const double cost =
                t == 0 ? -period : std::fabs(std::log(period / static_cast<double>(t)));
            if (best == usable || cost < best_cost) {
                best = p;
                best_cost = cost;
            }
        }
        if (best == usable) {
            out.warnings.push_back("no free frequency plane for offset " + std::to_string(t));
            continue;
        }
        if (t > 0 && static_cast<double>(t) > max_period) {
            out.warnings.push_back("offset " + std::to_string(t) +
                                   " exceeds the largest plane period " +
                                   std::to_string(max_period) + "; peak will alias");
        }
        taken[best] = true;
        // Phase -T*theta puts the causal peak of r*cos(delta*theta + alpha)
        // at delta = T; amplitude is split evenly between the two means.
        const double amp = std::sqrt(target.strength);
        const double phase = -static_cast<double>(t) * rope.theta(best);
        out.mu_q[2 * best] = amp * std::cos(phase);
        out.mu_q[2 * best + 1] = amp * std::sin(phase);
        out.mu_k[2 * best] = amp;
    }
    return out;
}

inline PlantedMeans plant_slash_means(const std::vector<std::size_t>& target_offsets,
                                      const RopeConfig& rope, double strength,
                                      std::size_t reserved_tail_planes = 0) {
    std::vector<PlantTarget> targets;
    targets.reserve(target_offsets.size());
    for (std::size_t t : target_offsets) targets.push_back({t, strength});
    return plant_slash_means(targets, rope, reserved_tail_planes);
}

}  // namespace vsp
