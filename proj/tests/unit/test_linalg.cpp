#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "tslab/linalg.hpp"
#include "tslab/rng.hpp"
#include "tslab/taskgen.hpp"

using namespace tslab;

namespace {

Matrix gaussian(Eigen::Index r, Eigen::Index c, double sd, std::uint64_t seed) {
    Rng rng(seed);
    return detail::gaussian_matrix(r, c, sd, rng);
}

}  // namespace

TEST(ThinSvd, Identity) {
    const ThinSvd s = thin_svd(Matrix::Identity(3, 3));
    EXPECT_EQ(s.rank(), 3);
    EXPECT_TRUE(s.S.isApprox(Vector::Ones(3)));
    EXPECT_LT((s.U * s.V.transpose() - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ThinSvd, DropsZeroSingularValue) {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = 3.0;
    const ThinSvd s = thin_svd(m);
    ASSERT_EQ(s.rank(), 1);
    EXPECT_DOUBLE_EQ(s.S(0), 3.0);
}

TEST(ThinSvd, RejectsNonFinite) {
    Matrix m = Matrix::Ones(2, 2);
    m(1, 0) = std::numeric_limits<double>::quiet_NaN();
    try {
        thin_svd(m);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::invalid_input);
    }
}

TEST(ThinSvd, TallGaussianMatchesGramEigenvalues) {
    const Matrix A = gaussian(3000, 30, 1.0 / std::sqrt(30.0), 11);
    const ThinSvd s = thin_svd(A);
    ASSERT_EQ(s.rank(), 30);

    // Independent route: eigenvalues of A^T A are the squared singular values.
    Eigen::SelfAdjointEigenSolver<Matrix> eig(A.transpose() * A);
    Vector ev = eig.eigenvalues().cwiseSqrt().reverse();
    EXPECT_LT((ev - s.S).cwiseAbs().maxCoeff() / s.S(0), 1e-10);

    const double centre = std::sqrt(3000.0 / 30.0);
    const double delta = 3.0 / std::sqrt(30.0);
    for (Eigen::Index i = 0; i < 30; ++i) {
        EXPECT_GE(s.S(i), centre * (1.0 - delta));
        EXPECT_LE(s.S(i), centre * (1.0 + delta));
    }
    for (Eigen::Index i = 1; i < 30; ++i) EXPECT_GE(s.S(i - 1), s.S(i));

    EXPECT_LT((s.U.transpose() * s.U - Matrix::Identity(30, 30)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((s.V.transpose() * s.V - Matrix::Identity(30, 30)).cwiseAbs().maxCoeff(), 1e-10);
    const Matrix rec = s.U * s.S.asDiagonal() * s.V.transpose();
    EXPECT_LE((rec - A).cwiseAbs().maxCoeff(), 10.0 * std::numeric_limits<double>::epsilon() * s.S(0));
}

TEST(Pinv, SmallCases) {
    EXPECT_TRUE(pinv(Matrix::Identity(4, 4)).isApprox(Matrix::Identity(4, 4)));
    EXPECT_TRUE(pinv(Matrix(2.0 * Matrix::Identity(2, 2))).isApprox(0.5 * Matrix::Identity(2, 2)));
}

TEST(Pinv, LeftInverseAndInvolution) {
    const Matrix A = gaussian(3000, 30, 1.0 / std::sqrt(30.0), 12);
    const Matrix P = pinv(A);
    EXPECT_LT((P * A - Matrix::Identity(30, 30)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((pinv(P) - A).norm() / A.norm(), 1e-6);

    const Matrix R = gaussian(7, 5, 1.0, 13);
    EXPECT_LT((pinv(pinv(R)) - R).norm() / R.norm(), 1e-6);
}

TEST(Pinv, TallGaussianApproachesScaledTranspose) {
    const Matrix A = gaussian(3000, 30, 1.0 / std::sqrt(30.0), 14);
    const Matrix P = pinv(A);
    const double ratio = (P - (30.0 / 3000.0) * A.transpose()).norm() / P.norm();
    // O(sqrt(N_s / N_x)) = 0.1
    EXPECT_LT(ratio, 3.0 * std::sqrt(30.0 / 3000.0));
    EXPECT_GT(ratio, 0.3 * std::sqrt(30.0 / 3000.0));
}

TEST(GramDeviation, ZeroForScaledOrthonormal) {
    const Matrix Q = thin_svd(gaussian(300, 10, 1.0, 15)).U;
    EXPECT_LT(gram_deviation(std::sqrt(300.0 / 10.0) * Q), 1e-25);
}

TEST(GramDeviation, SampleMeanMatchesExpectation) {
    for (auto [nx, ns] : std::vector<std::pair<int, int>>{{1000, 10}, {3000, 30}}) {
        const int seeds = 20;
        std::vector<double> vals;
        for (int s = 0; s < seeds; ++s)
            vals.push_back(gram_deviation(gaussian(nx, ns, 1.0 / std::sqrt(double(ns)), 100 + s)));
        double mean = 0.0;
        for (double v : vals) mean += v;
        mean /= seeds;
        double var = 0.0;
        for (double v : vals) var += (v - mean) * (v - mean);
        const double se = std::sqrt(var / (seeds - 1) / seeds);
        const double expected = (1.0 / nx) * (1.0 + 1.0 / ns);
        EXPECT_NEAR(mean, expected, 3.0 * se) << nx << "x" << ns;
        EXPECT_NEAR(mean, expected, 0.5 * expected);
    }
}

TEST(GramDeviation, HalvesWhenInputDimensionDoubles) {
    double small = 0.0;
    double large = 0.0;
    for (int s = 0; s < 20; ++s) {
        small += gram_deviation(gaussian(1500, 30, 1.0 / std::sqrt(30.0), 200 + s));
        large += gram_deviation(gaussian(3000, 30, 1.0 / std::sqrt(30.0), 300 + s));
    }
    EXPECT_NEAR(large / small, 0.5, 0.1);
}

TEST(ProjectorApprox, ExactForScaledOrthonormal) {
    const Matrix Q = thin_svd(gaussian(400, 8, 1.0, 16)).U;
    EXPECT_LT(projector_approx_error(std::sqrt(400.0 / 8.0) * Q), 1e-6);
}

TEST(ProjectorApprox, MatchesDenseEvaluation) {
    const Matrix A = gaussian(200, 5, 1.0 / std::sqrt(5.0), 17);
    Rng rng(18);
    const GateVector g = gen_gate(200, 0.5, rng);
    const Matrix X = g.bits.asDiagonal() * A;
    const Matrix U = thin_svd(X).U;
    const Matrix P = U * U.transpose();
    const double dense = (P - (5.0 / (0.5 * 200.0)) * X * X.transpose()).norm() / P.norm();
    EXPECT_NEAR(projector_approx_error(A, g.bits, 0.5), dense, 1e-10);
}

TEST(ProjectorApprox, SmallAtFullDensity) {
    const Matrix A = gaussian(3000, 30, 1.0 / std::sqrt(30.0), 19);
    EXPECT_LT(projector_approx_error(A), 0.2);
}

TEST(ProjectorApprox, BreaksDownAtSparseGates) {
    const Matrix A = gaussian(3000, 30, 1.0 / std::sqrt(30.0), 20);
    // alpha N_x = 15 < N_s: DA cannot have full column rank.
    Rng rng(21);
    const GateVector tiny = gen_gate(3000, 0.005, rng);
    try {
        projector_approx_error(A, tiny.bits, 0.005);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::degenerate_gate);
    }
    // alpha N_x = 60 just above N_s: rank is full but the approximation is O(1).
    const GateVector sparse = gen_gate(3000, 0.02, rng);
    EXPECT_GT(projector_approx_error(A, sparse.bits, 0.02), 0.5);
}
