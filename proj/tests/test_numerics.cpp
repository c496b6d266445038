#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "vsprefill/numerics.hpp"
#include "vsprefill/rng.hpp"

using namespace vsp;

TEST(Silu, KnownValues) {
    EXPECT_DOUBLE_EQ(silu(0.0), 0.0);
    // x*sigmoid(x) at x=-1: -1 * 1/(1+e) = -0.2689414...
    EXPECT_NEAR(silu(-1.0), -1.0 / (1.0 + std::exp(1.0)), 1e-15);
    EXPECT_NEAR(silu(1.0), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
    // saturates to identity / zero without overflowing
    EXPECT_NEAR(silu(1000.0), 1000.0, 1e-9);
    EXPECT_NEAR(silu(-1000.0), 0.0, 1e-9);
}

TEST(Silu, DerivativeMatchesFiniteDifference) {
    const double h = 1e-6;
    for (double x : {-5.0, -1.3, -0.2, 0.0, 0.4, 2.7, 8.0}) {
        const double fd = (silu(x + h) - silu(x - h)) / (2.0 * h);
        EXPECT_NEAR(silu_derivative(x), fd, 1e-8) << "x=" << x;
    }
}

TEST(Softmax, HandValues) {
    // exp([ln 1, ln 3]) normalizes to [1/4, 3/4]
    const std::vector<double> p = softmax_vector({std::log(1.0), std::log(3.0)});
    EXPECT_NEAR(p[0], 0.25, 1e-15);
    EXPECT_NEAR(p[1], 0.75, 1e-15);
}

TEST(Softmax, ShiftInvarianceAndStability) {
    const std::vector<double> a = softmax_vector({1.0, 2.0, 3.0});
    const std::vector<double> b = softmax_vector({1001.0, 1002.0, 1003.0});
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
}

TEST(Softmax, RowsSumToOne) {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix m = oracle::random_matrix(rng, 5, 9, 10.0);
        const Matrix p = softmax_rows(m);
        for (std::size_t i = 0; i < p.rows; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < p.cols; ++j) s += p(i, j);
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
}

TEST(Softmax, MaskZeroesDisallowedEntries) {
    Matrix m(2, 3);
    m(0, 0) = 5.0; m(0, 1) = 1.0; m(0, 2) = 0.0;
    m(1, 0) = 1.0; m(1, 1) = 1.0; m(1, 2) = 1.0;
    BoolMask mask = {1, 0, 1, 1, 1, 1};
    const Matrix p = softmax_rows(m, &mask);
    EXPECT_DOUBLE_EQ(p(0, 1), 0.0);
    EXPECT_NEAR(p(0, 0) + p(0, 2), 1.0, 1e-12);
    // row 0 reduces to a 2-way softmax over logits {5, 0}
    EXPECT_NEAR(p(0, 0), std::exp(5.0) / (std::exp(5.0) + 1.0), 1e-12);
}

TEST(Softmax, EmptyRowThrows) {
    Matrix m(1, 2);
    BoolMask mask = {0, 0};
    EXPECT_THROW(softmax_rows(m, &mask), std::invalid_argument);
}

TEST(SoftmaxBackward, MatchesFiniteDifference) {
    Rng rng(11);
    const std::vector<double> logits = {0.3, -1.2, 0.8, 2.0};
    std::vector<double> upstream(logits.size());
    for (double& u : upstream) u = rng.next_normal();

    const std::vector<double> pred = softmax_vector(logits);
    const std::vector<double> grad = softmax_backward(pred, upstream);

    auto scalar_loss = [&upstream](const std::vector<double>& lg) {
        const std::vector<double> p = softmax_vector(lg);
        double s = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) s += upstream[i] * p[i];
        return s;
    };
    const std::vector<double> fd = oracle::finite_difference(logits, scalar_loss, 1e-6);
    for (std::size_t i = 0; i < grad.size(); ++i) {
        EXPECT_LT(oracle::relative_error(grad[i], fd[i]), 1e-6) << "i=" << i;
    }
}

TEST(Matrix, MatmulHandValues) {
    Matrix a(2, 2, {1.0, 2.0, 3.0, 4.0});
    Matrix b(2, 2, {5.0, 6.0, 7.0, 8.0});
    const Matrix c = matmul(a, b);
    EXPECT_DOUBLE_EQ(c(0, 0), 19.0);
    EXPECT_DOUBLE_EQ(c(0, 1), 22.0);
    EXPECT_DOUBLE_EQ(c(1, 0), 43.0);
    EXPECT_DOUBLE_EQ(c(1, 1), 50.0);
}

TEST(Matrix, MatmulTransposeAMatchesExplicit) {
    Rng rng(3);
    Matrix a = oracle::random_matrix(rng, 4, 3);
    Matrix b = oracle::random_matrix(rng, 4, 5);
    const Matrix c = matmul_transpose_a(a, b);
    ASSERT_EQ(c.rows, 3u);
    ASSERT_EQ(c.cols, 5u);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            double expect = 0.0;
            for (std::size_t r = 0; r < 4; ++r) expect += a(r, i) * b(r, j);
            EXPECT_NEAR(c(i, j), expect, 1e-12);
        }
    }
}

TEST(Matrix, HconcatLayout) {
    Matrix a(2, 2, {1.0, 2.0, 3.0, 4.0});
    Matrix b(2, 1, {9.0, 8.0});
    const Matrix c = hconcat(a, b);
    ASSERT_EQ(c.cols, 3u);
    EXPECT_DOUBLE_EQ(c(0, 2), 9.0);
    EXPECT_DOUBLE_EQ(c(1, 0), 3.0);
    EXPECT_DOUBLE_EQ(c(1, 2), 8.0);
}

TEST(Matrix, FiniteChecks) {
    Matrix m(1, 2, {1.0, 2.0});
    EXPECT_TRUE(all_finite(m));
    m(0, 1) = std::numeric_limits<double>::infinity();
    EXPECT_FALSE(all_finite(m));
    EXPECT_THROW(require_finite(m, "probe"), std::invalid_argument);
}

TEST(Matrix, ShapeMismatchThrows) {
    Matrix a(2, 3);
    Matrix b(2, 3);
    EXPECT_THROW(matmul(a, b), std::invalid_argument);
    EXPECT_THROW(Matrix(2, 2, {1.0}), std::invalid_argument);
}
