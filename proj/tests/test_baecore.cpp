#include "modred/baecore.hpp"
#include "modred/random.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <cmath>

using namespace modred;
using namespace modred::bae;

namespace {

DenseMatrix dense_covariance(const DenseMatrix& draws) {
    const Vector mu = draws.rowwise().mean();
    DenseMatrix C = DenseMatrix::Zero(draws.rows(), draws.rows());
    for (Index j = 0; j < draws.cols(); ++j) C += (draws.col(j) - mu) * (draws.col(j) - mu).transpose();
    return C / double(draws.cols());
}

ErrorModel model_from_factor(const DenseMatrix& S, double sigma) {
    ErrorModel m;
    m.mu = Vector::Zero(S.rows());
    m.S = S;
    m.sigma = sigma;
    return m;
}

}  // namespace

TEST(SampleError, IdenticalModelsGiveZeroDraws) {
    const DenseMatrix A = standard_normal_matrix(7, 4, 1);
    auto f = [&](const Vector& x) { return Vector(A * x); };
    auto sampler = [](std::uint64_t s) {
        Vector x = standard_normal_vector(4, s);
        return std::pair{x, x};
    };
    const ErrorSample e = sample_error(f, f, sampler, 6, 10);
    EXPECT_EQ(e.dim(), 7);
    EXPECT_EQ(e.count(), 6);
    EXPECT_EQ(e.draws.norm(), 0.0);
}

TEST(SampleError, LinearPartitionGivesClutterTerm) {
    const DenseMatrix A1 = standard_normal_matrix(9, 3, 2), A2 = standard_normal_matrix(9, 2, 3);
    DenseMatrix A(9, 5);
    A << A1, A2;
    auto f_star = [&](const Vector& x) { return Vector(A * x); };
    auto f = [&](const Vector& z) { return Vector(A1 * z); };
    auto sampler = [](std::uint64_t s) {
        Vector x = standard_normal_vector(5, s);
        return std::pair{x, Vector(x.head(3))};
    };
    const ErrorSample e = sample_error(f_star, f, sampler, 4, 20);
    for (Index j = 0; j < 4; ++j) {
        const Vector x2 = standard_normal_vector(5, 20 + j).tail(2);
        EXPECT_LE((e.draws.col(j) - A2 * x2).norm(), 1e-13 * (A2 * x2).norm());
    }
}

TEST(SampleError, FailingDrawIsNamed) {
    auto f = [](const Vector& x) {
        if (x(0) > 1e9) return Vector(Vector::Zero(2));
        throw std::runtime_error("boom");
    };
    auto sampler = [](std::uint64_t) { return std::pair{Vector(Vector::Zero(1)), Vector(Vector::Zero(1))}; };
    try {
        sample_error(f, f, sampler, 3, 0);
        FAIL() << "expected an exception";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("draw"), std::string::npos);
    }
}

TEST(SampleError, ZeroDrawsRejected) {
    auto f = [](const Vector& x) { return x; };
    auto sampler = [](std::uint64_t) { return std::pair{Vector(Vector::Zero(1)), Vector(Vector::Zero(1))}; };
    EXPECT_THROW(sample_error(f, f, sampler, 0, 0), std::invalid_argument);
}

TEST(ErrorStatistics, SingleDraw) {
    ErrorSample s{standard_normal_matrix(5, 1, 4)};
    const ErrorModel m = error_statistics(s, 0.5);
    EXPECT_EQ(m.mu, s.draws.col(0));
    EXPECT_EQ(m.S.norm(), 0.0);
}

TEST(ErrorStatistics, TwoDrawsByHand) {
    ErrorSample s{standard_normal_matrix(4, 2, 5)};
    const Vector a = s.draws.col(0), b = s.draws.col(1);
    const ErrorModel m = error_statistics(s, 1.0);
    EXPECT_LE((m.mu - (a + b) / 2).norm(), 1e-15);
    const DenseMatrix expected = (a - b) * (a - b).transpose() / 4.0;
    EXPECT_LE((m.S * m.S.transpose() - expected).norm(), 1e-14);
}

TEST(ErrorStatistics, MatchesDenseCovariance) {
    ErrorSample s{standard_normal_matrix(12, 30, 6)};
    const ErrorModel m = error_statistics(s, 1.0);
    EXPECT_LE((m.S * m.S.transpose() - dense_covariance(s.draws)).norm(), 1e-12);
    Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(m.S * m.S.transpose());
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-12);
}

TEST(ErrorStatistics, NonPositiveSigmaRejected) {
    ErrorSample s{standard_normal_matrix(3, 2, 7)};
    EXPECT_THROW(error_statistics(s, 0.0), std::invalid_argument);
}

TEST(KlExpand, AnalyticTwoColumnCase) {
    DenseMatrix S = DenseMatrix::Zero(3, 2);
    S(0, 0) = 2.0;
    S(1, 1) = 1.0;
    const KLExpansion kl = kl_expand(model_from_factor(S, 1.0));
    ASSERT_EQ(kl.rank(), 2);
    EXPECT_NEAR(kl.lambdas(0), 4.0, 1e-14);
    EXPECT_NEAR(kl.lambdas(1), 1.0, 1e-14);
    EXPECT_NEAR(std::abs(kl.U(0, 0)), 1.0, 1e-14);
    EXPECT_NEAR(std::abs(kl.U(1, 1)), 1.0, 1e-14);
}

TEST(KlExpand, ZeroFactorIsEmpty) {
    EXPECT_EQ(kl_expand(model_from_factor(DenseMatrix::Zero(4, 3), 1.0)).rank(), 0);
}

TEST(KlExpand, ReconstructionTraceAndOrthonormality) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const DenseMatrix S = standard_normal_matrix(12, 5, seed);
        const KLExpansion kl = kl_expand(model_from_factor(S, 1.0));
        const DenseMatrix C = S * S.transpose();
        EXPECT_LE((kl.U * kl.lambdas.asDiagonal() * kl.U.transpose() - C).norm(), 1e-10 * C.norm());
        EXPECT_NEAR(kl.lambdas.sum(), C.trace(), 1e-10 * C.trace());
        EXPECT_LE((kl.U.transpose() * kl.U - DenseMatrix::Identity(kl.rank(), kl.rank())).cwiseAbs().maxCoeff(),
                  1e-12);
        for (Index i = 1; i < kl.rank(); ++i) EXPECT_GE(kl.lambdas(i - 1), kl.lambdas(i));
    }
}

TEST(Smw, ZeroFactorGivesZeroWhitener) {
    const DenseMatrix K = smw_whitener(model_from_factor(DenseMatrix::Zero(5, 2), 0.7));
    EXPECT_EQ(K.norm(), 0.0);
}

TEST(Smw, SingleColumnByHand) {
    DenseMatrix S = DenseMatrix::Zero(2, 1);
    S(0, 0) = 1.0;
    const DenseMatrix K = smw_whitener(model_from_factor(S, 1.0));
    DenseMatrix half = DenseMatrix::Zero(2, 2);
    half(0, 0) = 0.5;
    EXPECT_LE((K * K.transpose() - half).norm(), 1e-15);
    DenseMatrix M = DenseMatrix::Identity(2, 2);
    M(0, 0) = 2.0;
    EXPECT_LE((DenseMatrix::Identity(2, 2) - K * K.transpose() - M.inverse()).norm(), 1e-15);
}

TEST(Smw, IdentityOverSigmaRange) {
    for (double sigma : {0.01, 0.1, 1.0, 10.0}) {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const Index m = 20 + 16 * static_cast<Index>(seed), k = 2 * static_cast<Index>(seed);
            const DenseMatrix S = standard_normal_matrix(m, k, seed);
            const DenseMatrix K = smw_whitener(model_from_factor(S, sigma));
            const DenseMatrix I = DenseMatrix::Identity(m, m);
            const DenseMatrix prod = (S * S.transpose() + sigma * sigma * I) * (I - K * K.transpose()) / (sigma * sigma);
            EXPECT_LE((prod - I).norm(), 1e-8) << "sigma " << sigma << " seed " << seed;
        }
    }
}

TEST(Smw, WeightedMisfitMatchesDenseQuadraticForm) {
    const DenseMatrix S = standard_normal_matrix(15, 4, 8);
    const ErrorModel m = model_from_factor(S, 0.3);
    const DenseMatrix K = smw_whitener(m);
    const Vector r = standard_normal_vector(15, 9);
    const DenseMatrix C = S * S.transpose() + 0.09 * DenseMatrix::Identity(15, 15);
    EXPECT_NEAR(weighted_misfit(m, K, r), r.dot(C.ldlt().solve(r)), 1e-10 * r.squaredNorm() / 0.09);
}

TEST(BaeSolve, DegenerateModelMatchesLsqr) {
    const DenseMatrix A = standard_normal_matrix(25, 6, 10);
    const Vector b = standard_normal_vector(25, 11);
    const ErrorModel m = model_from_factor(DenseMatrix::Zero(25, 3), 1.0);
    const BaeSolveResult r = bae_normal_solve(LinearOperator::from_dense(A), b, m);
    MorozovOptions o;
    o.max_iter = 200;
    const LsqrResult l = lsqr_morozov(LinearOperator::from_dense(A), b, o);
    EXPECT_LE((r.x - l.x).norm(), 1e-6 * l.x.norm());
}

TEST(BaeSolve, MatchesDenseMinimizer) {
    const DenseMatrix A = standard_normal_matrix(30, 8, 12);
    const Vector b = standard_normal_vector(30, 13);
    ErrorModel m = model_from_factor(standard_normal_matrix(30, 4, 14), 0.2);
    m.mu = 0.1 * standard_normal_vector(30, 15);
    const DenseMatrix G = (m.S * m.S.transpose() + 0.04 * DenseMatrix::Identity(30, 30)).inverse();
    const Vector oracle = (A.transpose() * G * A).ldlt().solve(A.transpose() * G * (b - m.mu));
    const BaeSolveResult r = bae_normal_solve(LinearOperator::from_dense(A), b, m);
    EXPECT_LE((r.x - oracle).norm(), 1e-6 * oracle.norm());
}

TEST(BaeSolve, DiscrepancyStopIsMorozovLike) {
    const DenseMatrix A = standard_normal_matrix(120, 60, 16);
    const Vector e = 0.05 * standard_normal_vector(120, 17);
    const Vector b = A * standard_normal_vector(60, 18) + e;
    const ErrorModel m = model_from_factor(0.01 * standard_normal_matrix(120, 3, 19), 0.05);
    BaeSolveOptions o;
    o.noise_norm = e.norm();
    o.tau = 1.1;
    const BaeSolveResult r = bae_normal_solve(LinearOperator::from_dense(A), b, m, o);
    ASSERT_EQ(r.reason, StopReason::discrepancy);
    EXPECT_LE(r.weighted_discrepancy, o.tau * o.noise_norm);
    ASSERT_GE(r.discrepancy_history.size(), 2u);
    EXPECT_GT(r.discrepancy_history[r.discrepancy_history.size() - 2], o.tau * o.noise_norm);
}

TEST(GaussianMap, ZeroCovariancesInvertF) {
    const DenseMatrix F = standard_normal_matrix(5, 5, 20) + 3 * DenseMatrix::Identity(5, 5);
    const Vector b = standard_normal_vector(5, 21);
    ErrorModel m = model_from_factor(DenseMatrix::Zero(5, 1), 1.0);
    m.mu = 0.3 * Vector::Ones(5);
    const Vector z = gaussian_map_estimate(LinearOperator::from_dense(F), b, m, SparseMatrix(5, 5));
    EXPECT_LE((z - F.lu().solve(b - m.mu)).norm(), 1e-10);
}

TEST(GaussianMap, ScalarCase) {
    ErrorModel m = model_from_factor(DenseMatrix::Zero(1, 1), 1.0);
    SparseMatrix Q(1, 1);
    Q.insert(0, 0) = 1.0;
    const Vector z = gaussian_map_estimate(LinearOperator::from_dense(DenseMatrix::Ones(1, 1)), Vector::Constant(1, 2.0),
                                           m, Q);
    EXPECT_NEAR(z(0), 1.0, 1e-15);
}

TEST(GaussianMap, MatchesDenseOracle) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const DenseMatrix F = standard_normal_matrix(20, 6, seed);
        const Vector b = standard_normal_vector(20, seed + 10);
        ErrorModel m = model_from_factor(standard_normal_matrix(20, 3, seed + 20), 0.5);
        m.mu = standard_normal_vector(20, seed + 30);
        const DenseMatrix B = standard_normal_matrix(6, 6, seed + 40);
        const DenseMatrix Qd = B * B.transpose() + DenseMatrix::Identity(6, 6);
        const SparseMatrix Q = Qd.sparseView();
        const DenseMatrix G = (m.S * m.S.transpose() + 0.25 * DenseMatrix::Identity(20, 20)).inverse();
        const Vector oracle = (F.transpose() * G * F + Qd).lu().solve(F.transpose() * G * (b - m.mu));
        const Vector z = gaussian_map_estimate(LinearOperator::from_dense(F), b, m, Q);
        EXPECT_LE((z - oracle).norm(), 1e-8 * oracle.norm());
    }
}
