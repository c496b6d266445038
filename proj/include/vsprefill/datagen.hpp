#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "vsprefill/attention.hpp"
#include "vsprefill/matrix.hpp"
#include "vsprefill/rng.hpp"
#include "vsprefill/rope.hpp"
#include "vsprefill/theory.hpp"
#include "vsprefill/vsaggregate.hpp"

namespace vsp {

struct AnchorSpec {
    std::size_t column = 0;
    double strength = 1.0;
};

// Synthetic instance description: vertical heavy hitters at `anchors`, slash
// diagonals at `slash_offsets`, i.i.d. Gaussian noise on top.
struct PlantSpec {
    std::size_t n = 128;
    std::size_t d = 16;
    std::vector<AnchorSpec> anchors;
    std::vector<PlantTarget> slash_offsets;
    double noise_sigma = 0.5;
    double q_base = 1.0;  // query-mean mass on the slowest plane; keeps the
                          // post-RoPE mean query direction well defined
    std::uint64_t seed = 1;
    double rope_base = 10000.0;

    void check() const {
        require(n >= 1, "plant spec: n must be >= 1");
        require(d >= 2 && d % 2 == 0, "plant spec: d must be even and >= 2");
        for (const AnchorSpec& a : anchors) {
            require(a.column < n, "plant spec: anchor column out of range");
            require(a.strength >= 0.0, "plant spec: anchor strength must be >= 0");
        }
        for (const PlantTarget& t : slash_offsets) {
            require(t.offset < n, "plant spec: slash offset out of range");
        }
        require(noise_sigma >= 0.0, "plant spec: noise_sigma must be >= 0");
    }
};

struct GeneratedSample {
    Matrix q;  // RoPE-applied
    Matrix k;  // RoPE-applied, anchors planted
    Matrix v;
    VSScores targets;  // normalized ground truth from the streaming aggregator
    std::vector<std::string> warnings;
};

// The slowest frequency plane is reserved for the query baseline: it barely
// rotates over desk-scale positions, so the post-RoPE mean query direction
// stays coherent and anchors aligned with it score high from every row.
inline GeneratedSample generate(const PlantSpec& spec, std::size_t block = 32) {
    spec.check();
    const RopeConfig rope(spec.d, spec.rope_base);
    const PlantedMeans planted = plant_slash_means(spec.slash_offsets, rope,
                                                   /*reserved_tail_planes=*/1);

    std::vector<double> mu_q = planted.mu_q;
    std::vector<double> mu_k = planted.mu_k;
    mu_q[spec.d - 2] += spec.q_base;

    Rng root(spec.seed);
    Rng rng_q = root.derive(1);
    Rng rng_k = root.derive(2);
    Rng rng_v = root.derive(3);

    const Covariance noise = Covariance::isotropic(spec.noise_sigma * spec.noise_sigma, spec.d);
    Matrix q0 = sample_gaussian(mu_q, noise, spec.n, rng_q);
    Matrix k0 = sample_gaussian(mu_k, noise, spec.n, rng_k);

    GeneratedSample out;
    out.warnings = planted.warnings;
    out.q = apply_rope(q0, rope);
    out.k = apply_rope(k0, rope);
    out.v = sample_gaussian(std::vector<double>(spec.d, 0.0), Covariance::isotropic(1.0, spec.d),
                            spec.n, rng_v);

    if (!spec.anchors.empty()) {
        // Anchor keys are planted after rotation, aligned with the mean
        // post-RoPE query, so a planted column scores high at every position.
        std::vector<double> mean_q(spec.d, 0.0);
        for (std::size_t i = 0; i < spec.n; ++i) {
            const double* row = out.q.row_ptr(i);
            for (std::size_t c = 0; c < spec.d; ++c) mean_q[c] += row[c];
        }
        double norm = 0.0;
        for (double& x : mean_q) {
            x /= static_cast<double>(spec.n);
            norm += x * x;
        }
        norm = std::sqrt(norm);
        if (norm < 1e-9) {
            mean_q.assign(spec.d, 0.0);
            mean_q[spec.d - 2] = 1.0;
            norm = 1.0;
        }
        for (double& x : mean_q) x /= norm;
        for (const AnchorSpec& a : spec.anchors) {
            double* row = out.k.row_ptr(a.column);
            for (std::size_t c = 0; c < spec.d; ++c) row[c] = a.strength * mean_q[c];
        }
    }

    out.targets = aggregate_streaming(AttentionInputs(out.q, out.k, out.v), block);
    return out;
}

// Per-sample seeds for a batch, derived so neighboring indices give unrelated
// streams.
inline std::uint64_t sample_seed(std::uint64_t base_seed, std::size_t index) {
    return Rng(base_seed).derive(0x5A17 + index).seed();
}

// The synthetic family used by the CLI defaults and the ablation benches:
// two anchor columns and three slash diagonals (plus whatever fits when n is
// small), moderate noise.
inline PlantSpec default_plant_spec(std::size_t n, std::size_t d, std::uint64_t seed) {
    PlantSpec spec;
    spec.n = n;
    spec.d = d;
    spec.seed = seed;
    spec.noise_sigma = 0.8;
    const std::vector<AnchorSpec> anchors = {{3, 8.0}, {n / 2, 6.0}};
    for (const AnchorSpec& a : anchors) {
        if (a.column < n) spec.anchors.push_back(a);
    }
    const std::vector<PlantTarget> offsets = {{0, 2.0}, {16, 4.0}, {37, 3.0}};
    for (const PlantTarget& t : offsets) {
        if (t.offset < n) spec.slash_offsets.push_back(t);
    }
    return spec;
}

inline std::vector<GeneratedSample> generate_batch(const PlantSpec& base, std::size_t count,
                                                   std::size_t block = 32) {
    std::vector<GeneratedSample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        PlantSpec spec = base;
        spec.seed = sample_seed(base.seed, i);
        out.push_back(generate(spec, block));
    }
    return out;
}

}  // namespace vsp
