#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "oracles.hpp"
#include "vsprefill/theory.hpp"

using namespace vsp;

namespace {

GaussianQKModel random_model(std::size_t head_dim, Rng& rng, double variance = 1.0) {
    GaussianQKModel m{std::vector<double>(head_dim), std::vector<double>(head_dim),
                      Covariance::isotropic(variance, head_dim),
                      Covariance::isotropic(variance, head_dim), RopeConfig(head_dim)};
    for (double& x : m.mu_q) x = rng.next_normal();
    for (double& x : m.mu_k) x = rng.next_normal();
    return m;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TEST(SlashSpectrum, SinglePlaneHandValues) {
    GaussianQKModel m{{1.0, 2.0}, {3.0, 4.0}, Covariance::isotropic(1.0, 2),
                      Covariance::isotropic(1.0, 2), RopeConfig(2)};
    const SlashSpectrum s = slash_spectrum(m);
    ASSERT_EQ(s.a.size(), 1u);
    EXPECT_DOUBLE_EQ(s.a[0], 11.0);  // 1*3 + 2*4
    EXPECT_DOUBLE_EQ(s.b[0], 2.0);   // 2*3 - 1*4
    EXPECT_DOUBLE_EQ(s.r[0], std::hypot(11.0, 2.0));
    EXPECT_DOUBLE_EQ(s.alpha[0], std::atan2(2.0, 11.0));
    // r cos(alpha) = a and r sin(alpha) = b reconstruct the pair
    EXPECT_NEAR(s.r[0] * std::cos(s.alpha[0]), s.a[0], 1e-12);
    EXPECT_NEAR(s.r[0] * std::sin(s.alpha[0]), s.b[0], 1e-12);
}

TEST(SlashSpectrum, RejectsMismatchedModel) {
    GaussianQKModel m{{1.0}, {1.0, 0.0}, Covariance::isotropic(1.0, 2),
                      Covariance::isotropic(1.0, 2), RopeConfig(2)};
    EXPECT_THROW(slash_spectrum(m), std::invalid_argument);
}

TEST(ExpectedScore, ZeroOffsetIsMeanDotProduct) {
    Rng rng(111);
    for (int trial = 0; trial < 10; ++trial) {
        const GaussianQKModel m = random_model(8, rng);
        const SlashSpectrum s = slash_spectrum(m);
        EXPECT_NEAR(expected_score(s, 0.0, m.rope), dot(m.mu_q, m.mu_k), 1e-12);
    }
}

TEST(ExpectedScore, MatchesRotatedMeanDotProduct) {
    // Independence makes the expectation separable: E<R(m)q, R(n)k> =
    // <R(delta) mu_q, mu_k>. Check the closed form against an explicit
    // rotation-matrix evaluation of the right-hand side.
    Rng rng(112);
    for (std::size_t head_dim : {2u, 4u, 8u}) {
        const GaussianQKModel m = random_model(head_dim, rng);
        const SlashSpectrum s = slash_spectrum(m);
        for (std::int64_t delta : {0, 1, 2, 3, 7, 40, 100}) {
            const std::vector<double> rotated =
                oracle::rope_matrix_apply(m.mu_q, static_cast<double>(delta), m.rope.base);
            EXPECT_NEAR(expected_score(s, static_cast<double>(delta), m.rope),
                        dot(rotated, m.mu_k), 1e-10)
                << "D=" << head_dim << " delta=" << delta;
        }
        // negative offsets: rotate the key side instead
        for (std::int64_t delta : {-1, -5, -33}) {
            const std::vector<double> rotated =
                oracle::rope_matrix_apply(m.mu_k, static_cast<double>(-delta), m.rope.base);
            EXPECT_NEAR(expected_score(s, static_cast<double>(delta), m.rope),
                        dot(m.mu_q, rotated), 1e-10);
        }
    }
}

TEST(ExpectedScore, TwoFormsAgreeAcrossHugeOffsets) {
    Rng rng(113);
    for (int trial = 0; trial < 5; ++trial) {
        const GaussianQKModel m = random_model(8, rng);
        const SlashSpectrum s = slash_spectrum(m);
        double worst = 0.0;
        for (std::int64_t delta = -10000; delta <= 10000; delta += 7) {
            const double d = static_cast<double>(delta);
            worst = std::max(worst,
                             std::fabs(expected_score(s, d, m.rope) -
                                       expected_score_phase(s, d, m.rope)));
        }
        for (int i = 0; i < 200; ++i) {
            const double d = (rng.next_uniform() * 2.0 - 1.0) * 1e4;
            worst = std::max(worst,
                             std::fabs(expected_score(s, d, m.rope) -
                                       expected_score_phase(s, d, m.rope)));
        }
        EXPECT_LE(worst, 1e-12) << "trial=" << trial;
    }
}

TEST(ExpectedScore, RejectsPlaneMismatch) {
    Rng rng(114);
    const GaussianQKModel m = random_model(4, rng);
    const SlashSpectrum s = slash_spectrum(m);
    EXPECT_THROW(expected_score(s, 1.0, RopeConfig(8)), std::invalid_argument);
    EXPECT_THROW(expected_score_phase(s, 1.0, RopeConfig(8)), std::invalid_argument);
}

TEST(MonteCarlo, ZeroVarianceReproducesClosedForm) {
    Rng rng(115);
    GaussianQKModel m = random_model(6, rng, 0.0);  // every draw equals the mean
    const SlashSpectrum s = slash_spectrum(m);
    Rng mc_rng(1);
    const McProfile prof = monte_carlo_score(m, -3, 4, 1000, mc_rng);
    ASSERT_EQ(prof.offsets.size(), 7u);
    for (std::size_t i = 0; i < prof.offsets.size(); ++i) {
        const double want = expected_score(s, static_cast<double>(prof.offsets[i]), m.rope);
        EXPECT_NEAR(prof.mean[i], want, 1e-10);
        EXPECT_NEAR(prof.stderr_[i], 0.0, 1e-10);
    }
}

TEST(MonteCarlo, TracksClosedFormWithinFiveSigma) {
    Rng rng(116);
    const GaussianQKModel m = random_model(8, rng);
    const SlashSpectrum s = slash_spectrum(m);
    Rng mc_rng(2);
    const McProfile prof = monte_carlo_score(m, 0, 16, 20000, mc_rng);
    for (std::size_t i = 0; i < prof.offsets.size(); ++i) {
        const double want = expected_score(s, static_cast<double>(prof.offsets[i]), m.rope);
        ASSERT_GT(prof.stderr_[i], 0.0);
        EXPECT_LE(std::fabs(prof.mean[i] - want), 5.0 * prof.stderr_[i])
            << "delta=" << prof.offsets[i];
    }
}

TEST(MonteCarlo, IndependentDrawsAlsoTrack) {
    Rng rng(117);
    const GaussianQKModel m = random_model(4, rng);
    const SlashSpectrum s = slash_spectrum(m);
    Rng crn_rng(3), ind_rng(3);
    const McProfile crn = monte_carlo_score(m, 0, 4, 5000, crn_rng);
    const McProfile ind = monte_carlo_score(m, 0, 4, 5000, ind_rng, /*independent_draws=*/true);
    bool identical = true;
    for (std::size_t i = 0; i < crn.offsets.size(); ++i) {
        const double want = expected_score(s, static_cast<double>(ind.offsets[i]), m.rope);
        EXPECT_LE(std::fabs(ind.mean[i] - want), 5.0 * ind.stderr_[i]);
        identical = identical && crn.mean[i] == ind.mean[i];
    }
    // past offset 0 the estimators consume different draws
    EXPECT_FALSE(identical);
}

TEST(MonteCarlo, BaseShiftLeavesProfileInPlace) {
    Rng rng(118);
    const GaussianQKModel m = random_model(8, rng);
    Rng r1(4), r2(4);
    const McProfile at_zero = monte_carlo_score(m, 0, 8, 2000, r1);
    const McProfile shifted = monte_carlo_score(m, 0, 8, 2000, r2, false, /*base=*/137);
    for (std::size_t i = 0; i < at_zero.offsets.size(); ++i) {
        EXPECT_NEAR(shifted.mean[i], at_zero.mean[i], 1e-10) << "delta=" << at_zero.offsets[i];
    }
}

TEST(MonteCarlo, Validation) {
    Rng rng(119);
    const GaussianQKModel m = random_model(4, rng);
    Rng r(5);
    EXPECT_THROW(monte_carlo_score(m, 3, 3, 2000, r), std::invalid_argument);
    EXPECT_THROW(monte_carlo_score(m, 0, 4, 999, r), std::invalid_argument);
    GaussianQKModel bad = m;
    bad.mu_q.pop_back();
    EXPECT_THROW(monte_carlo_score(bad, 0, 4, 2000, r), std::invalid_argument);
}

TEST(PlantSlashMeans, SingleTargetPeaksThere) {
    const RopeConfig rope(8);
    const std::size_t target = 5;
    const double strength = 2.0;
    const PlantedMeans pm = plant_slash_means({PlantTarget{target, strength}}, rope);
    EXPECT_TRUE(pm.warnings.empty());
    GaussianQKModel m{pm.mu_q, pm.mu_k, Covariance::isotropic(1.0, 8),
                      Covariance::isotropic(1.0, 8), rope};
    const SlashSpectrum s = slash_spectrum(m);
    // the planted plane contributes r = strength with zero phase error at the target
    EXPECT_NEAR(expected_score(s, static_cast<double>(target), rope), strength, 1e-12);
    std::size_t argmax = 0;
    double best = -1e300;
    for (std::size_t delta = 0; delta <= 10; ++delta) {
        const double v = expected_score(s, static_cast<double>(delta), rope);
        if (v > best) {
            best = v;
            argmax = delta;
        }
    }
    EXPECT_EQ(argmax, target);
}

TEST(PlantSlashMeans, MultipleTargetsGetDistinctPlanes) {
    const RopeConfig rope(8);
    const PlantedMeans pm =
        plant_slash_means({PlantTarget{0, 1.0}, PlantTarget{50, 1.0}}, rope);
    EXPECT_TRUE(pm.warnings.empty());
    // offset 0 parks on the slowest plane (largest period), offset 50 on the
    // plane whose period 2*pi*10 ~ 63 is log-closest to 50
    EXPECT_NE(pm.mu_k[6], 0.0);
    EXPECT_NE(pm.mu_k[2], 0.0);
    EXPECT_EQ(pm.mu_k[0], 0.0);
    EXPECT_EQ(pm.mu_k[4], 0.0);

    GaussianQKModel m{pm.mu_q, pm.mu_k, Covariance::isotropic(1.0, 8),
                      Covariance::isotropic(1.0, 8), rope};
    const SlashSpectrum s = slash_spectrum(m);
    std::size_t argmax = 40;
    double best = -1e300;
    for (std::size_t delta = 40; delta <= 60; ++delta) {
        const double v = expected_score(s, static_cast<double>(delta), rope);
        if (v > best) {
            best = v;
            argmax = delta;
        }
    }
    EXPECT_GE(argmax, 49u);
    EXPECT_LE(argmax, 51u);
}

TEST(PlantSlashMeans, StrengthScalesTheProfileLinearly) {
    const RopeConfig rope(8);
    const PlantedMeans one = plant_slash_means({PlantTarget{7, 1.0}}, rope);
    const PlantedMeans four = plant_slash_means({PlantTarget{7, 4.0}}, rope);
    GaussianQKModel m1{one.mu_q, one.mu_k, Covariance::isotropic(1.0, 8),
                       Covariance::isotropic(1.0, 8), rope};
    GaussianQKModel m4{four.mu_q, four.mu_k, Covariance::isotropic(1.0, 8),
                       Covariance::isotropic(1.0, 8), rope};
    const SlashSpectrum s1 = slash_spectrum(m1);
    const SlashSpectrum s4 = slash_spectrum(m4);
    for (double delta : {0.0, 3.0, 7.0, 12.0}) {
        EXPECT_NEAR(expected_score(s4, delta, rope), 4.0 * expected_score(s1, delta, rope),
                    1e-12);
    }
}

TEST(PlantSlashMeans, ReservedTailPlanesStayEmpty) {
    const RopeConfig rope(8);
    const PlantedMeans pm = plant_slash_means({PlantTarget{0, 3.0}}, rope,
                                              /*reserved_tail_planes=*/1);
    // plane 3 reserved: offset 0 lands on plane 2 instead
    EXPECT_EQ(pm.mu_q[6], 0.0);
    EXPECT_EQ(pm.mu_q[7], 0.0);
    EXPECT_EQ(pm.mu_k[6], 0.0);
    EXPECT_NE(pm.mu_k[4], 0.0);
}

TEST(PlantSlashMeans, WarnsWhenOutOfPlanesOrPeriod) {
    const RopeConfig small(2);  // one plane, period 2*pi
    const PlantedMeans crowded =
        plant_slash_means({PlantTarget{1, 1.0}, PlantTarget{2, 1.0}}, small);
    ASSERT_EQ(crowded.warnings.size(), 1u);
    EXPECT_NE(crowded.warnings[0].find("no free frequency plane"), std::string::npos);

    const PlantedMeans aliased = plant_slash_means({PlantTarget{100, 1.0}}, small);
    ASSERT_EQ(aliased.warnings.size(), 1u);
    EXPECT_NE(aliased.warnings[0].find("peak will alias"), std::string::npos);

    const PlantedMeans skipped = plant_slash_means({PlantTarget{3, 0.0}}, small);
    EXPECT_TRUE(skipped.warnings.empty());
    for (double x : skipped.mu_q) EXPECT_EQ(x, 0.0);

    EXPECT_THROW(plant_slash_means({PlantTarget{1, -1.0}}, small), std::invalid_argument);
    EXPECT_THROW(plant_slash_means({PlantTarget{1, 1.0}}, small, 1), std::invalid_argument);
}

TEST(PlantSlashMeans, OffsetListOverloadMatchesTargetForm) {
    const RopeConfig rope(8);
    const PlantedMeans a = plant_slash_means(std::vector<std::size_t>{3, 11}, rope, 2.5);
    const PlantedMeans b =
        plant_slash_means({PlantTarget{3, 2.5}, PlantTarget{11, 2.5}}, rope);
    EXPECT_EQ(a.mu_q, b.mu_q);
    EXPECT_EQ(a.mu_k, b.mu_k);
}
