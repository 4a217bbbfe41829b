#include "modred/numkit.hpp"
#include "modred/random.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <gtest/gtest.h>

#include <cmath>

using namespace modred;

namespace {

double orthonormality_defect(const DenseMatrix& U) {
    return (U.transpose() * U - DenseMatrix::Identity(U.cols(), U.cols())).cwiseAbs().maxCoeff();
}

// Projector onto the column span of B via a pivoted QR that is independent of
// the code under test.
DenseMatrix span_projector(const DenseMatrix& B) {
    Eigen::ColPivHouseholderQR<DenseMatrix> qr(B);
    const Index r = qr.rank();
    const DenseMatrix Q = DenseMatrix(qr.householderQ()).leftCols(r);
    return Q * Q.transpose();
}

}  // namespace

TEST(OrthonormalBasis, IdentityGivesSignedIdentity) {
    for (auto method : {BasisMethod::svd, BasisMethod::qr}) {
        const DenseMatrix U = orthonormal_basis(DenseMatrix::Identity(3, 3), method);
        ASSERT_EQ(U.cols(), 3);
        EXPECT_NEAR((U.cwiseAbs() - DenseMatrix::Identity(3, 3)).norm(), 0.0, 1e-12);
    }
}

TEST(OrthonormalBasis, ScaledAxesSpanFirstTwoCoordinates) {
    DenseMatrix A = DenseMatrix::Zero(3, 2);
    A(0, 0) = 2.0;
    A(1, 1) = 1.0;
    for (auto method : {BasisMethod::svd, BasisMethod::qr}) {
        const DenseMatrix U = orthonormal_basis(A, method);
        ASSERT_EQ(U.cols(), 2);
        EXPECT_NEAR(U.row(2).norm(), 0.0, 1e-14);
        EXPECT_LE(orthonormality_defect(U), 1e-12);
    }
}

TEST(OrthonormalBasis, ProportionalColumnsGiveRankOne) {
    DenseMatrix A(4, 2);
    A.col(0) << 1, 2, 3, 4;
    A.col(1) = -2.5 * A.col(0);
    EXPECT_EQ(orthonormal_basis(A, BasisMethod::svd).cols(), 1);
    EXPECT_EQ(orthonormal_basis(A, BasisMethod::qr).cols(), 1);
}

TEST(OrthonormalBasis, ZeroMatrixGivesEmptyBasis) {
    const DenseMatrix U = orthonormal_basis(DenseMatrix::Zero(5, 3));
    EXPECT_EQ(U.rows(), 5);
    EXPECT_EQ(U.cols(), 0);
}

TEST(OrthonormalBasis, SpanMatchesIndependentQrOnRandomRankDeficientInputs) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Index m = 10 + static_cast<Index>(seed), r = 1 + static_cast<Index>(seed % 5);
        const DenseMatrix A = standard_normal_matrix(m, r, seed) * standard_normal_matrix(r, 7, seed + 100);
        for (auto method : {BasisMethod::svd, BasisMethod::qr}) {
            const DenseMatrix U = orthonormal_basis(A, method);
            ASSERT_EQ(U.cols(), r);
            EXPECT_LE(orthonormality_defect(U), 1e-12);
            EXPECT_LE((U * U.transpose() - span_projector(A)).norm(), 1e-10);
        }
    }
}

TEST(LeanSvd, DiagonalSingularValues) {
    DenseMatrix A = DenseMatrix::Zero(2, 2);
    A(0, 0) = 1.0;
    A(1, 1) = 3.0;
    const LeanSvd s = lean_svd(A);
    EXPECT_NEAR(s.d(0), 3.0, 1e-14);
    EXPECT_NEAR(s.d(1), 1.0, 1e-14);
}

TEST(LeanSvd, RankOneOuterProduct) {
    Vector u(3), v(2);
    u << 2.0, 0.0, 0.0;
    v << 0.6, 0.8;
    const LeanSvd s = lean_svd(u * v.transpose());
    EXPECT_NEAR(s.d(0), 2.0, 1e-14);
    EXPECT_NEAR(s.d(1), 0.0, 1e-14);
}

TEST(LeanSvd, ReconstructionAndOrthonormalityOnRandomMatrices) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const DenseMatrix A = standard_normal_matrix(10, 4, seed);
        const LeanSvd s = lean_svd(A);
        EXPECT_LE((A - s.U * s.d.asDiagonal() * s.V.transpose()).norm(), 1e-10 * A.norm());
        EXPECT_LE(orthonormality_defect(s.U), 1e-12);
        EXPECT_LE(orthonormality_defect(s.V), 1e-12);
        for (Index i = 1; i < s.d.size(); ++i) EXPECT_GE(s.d(i - 1), s.d(i));
        EXPECT_GE(s.d.minCoeff(), 0.0);
        // Oracle: singular values are square roots of the eigenvalues of A^T A.
        Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(A.transpose() * A);
        Vector ev = eig.eigenvalues().reverse().cwiseMax(0.0).cwiseSqrt();
        EXPECT_LE((ev - s.d).norm(), 1e-10 * s.d(0));
    }
}

TEST(LeanSvd, WideMatrixAndZeroMatrix) {
    const DenseMatrix A = standard_normal_matrix(3, 8, 5);
    const LeanSvd s = lean_svd(A);
    EXPECT_EQ(s.d.size(), 3);
    EXPECT_LE((A - s.U * s.d.asDiagonal() * s.V.transpose()).norm(), 1e-10 * A.norm());
    const LeanSvd z = lean_svd(DenseMatrix::Zero(4, 2));
    EXPECT_EQ(z.d.size(), 2);
    EXPECT_EQ(z.d.norm(), 0.0);
}

TEST(LinearOperatorTest, AdjointConsistencyOfDenseAndSparse) {
    const DenseMatrix A = standard_normal_matrix(13, 7, 3);
    EXPECT_LE(adjoint_defect(LinearOperator::from_dense(A)), 1e-10);
    SparseMatrix S = A.sparseView(1.0, 1.0);
    EXPECT_LE(adjoint_defect(LinearOperator::from_sparse(S)), 1e-10);
    EXPECT_LE((LinearOperator::from_dense(A).to_dense() - A).norm(), 0.0);
}

TEST(LinearOperatorTest, BrokenAdjointIsDetected) {
    const DenseMatrix A = standard_normal_matrix(6, 6, 4);
    const DenseMatrix B = standard_normal_matrix(6, 6, 5);
    LinearOperator bad(6, 6, [A](const Vector& v) { return Vector(A * v); },
                       [B](const Vector& w) { return Vector(B.transpose() * w); });
    EXPECT_GT(adjoint_defect(bad), 1e-3);
}

TEST(LinearOperatorTest, DimensionMismatchThrows) {
    const auto op = LinearOperator::from_dense(DenseMatrix::Identity(3, 2));
    EXPECT_THROW(op.apply(Vector::Ones(3)), std::invalid_argument);
    EXPECT_THROW(op.apply_adjoint(Vector::Ones(2)), std::invalid_argument);
}

TEST(Lsqr, IdentityRecoversRhs) {
    const Vector b = standard_normal_vector(9, 1);
    const LsqrResult r = lsqr_morozov(LinearOperator::identity(9), b);
    EXPECT_LE((r.x - b).norm(), 1e-10);
}

TEST(Lsqr, ConsistentSystemMatchesDenseNormalEquations) {
    const DenseMatrix A = standard_normal_matrix(20, 10, 2);
    const Vector b = A * standard_normal_vector(10, 3);
    MorozovOptions o;
    o.max_iter = 200;
    const LsqrResult r = lsqr_morozov(LinearOperator::from_dense(A), b, o);
    const Vector oracle = (A.transpose() * A).ldlt().solve(A.transpose() * b);
    EXPECT_LE((r.x - oracle).norm(), 1e-8 * oracle.norm());
}

TEST(Lsqr, InconsistentSystemMatchesLeastSquares) {
    const DenseMatrix A = standard_normal_matrix(30, 6, 6);
    const Vector b = standard_normal_vector(30, 7);
    MorozovOptions o;
    o.max_iter = 200;
    const LsqrResult r = lsqr_morozov(LinearOperator::from_dense(A), b, o);
    const Vector oracle = A.colPivHouseholderQr().solve(b);
    EXPECT_LE((r.x - oracle).norm(), 1e-8 * oracle.norm());
    EXPECT_EQ(r.reason, StopReason::numerical);
}

TEST(Lsqr, MorozovStopsAtFirstIterateBelowTarget) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const DenseMatrix A = standard_normal_matrix(80, 40, seed);
        const Vector e = 0.1 * standard_normal_vector(80, seed + 50);
        const Vector b = A * standard_normal_vector(40, seed + 90) + e;
        MorozovOptions o;
        o.noise_norm = e.norm();
        o.tau = 1.05;
        o.max_iter = 200;
        const LsqrResult r = lsqr_morozov(LinearOperator::from_dense(A), b, o);
        ASSERT_TRUE(r.reached_discrepancy());
        const double target = o.tau * o.noise_norm;
        EXPECT_NEAR(r.residual_norm, (A * r.x - b).norm(), 1e-12 * b.norm());
        EXPECT_LE(r.residual_norm, target);
        ASSERT_EQ(static_cast<int>(r.residual_history.size()), r.iterations + 1);
        EXPECT_GT(r.residual_history[r.iterations - 1], target);
        for (std::size_t i = 1; i < r.residual_history.size(); ++i)
            EXPECT_LE(r.residual_history[i], r.residual_history[i - 1] * (1 + 1e-12));
    }
}

TEST(Lsqr, MaxIterIsFlaggedNotFatal) {
    const DenseMatrix A = standard_normal_matrix(50, 50, 8);
    const Vector b = standard_normal_vector(50, 9);
    MorozovOptions o;
    o.noise_norm = 1e-8;
    o.max_iter = 3;
    const LsqrResult r = lsqr_morozov(LinearOperator::from_dense(A), b, o);
    EXPECT_EQ(r.reason, StopReason::max_iter);
    EXPECT_EQ(r.iterations, 3);
}

TEST(Lsqr, ZeroRhsAndInvalidTau) {
    const auto A = LinearOperator::from_dense(standard_normal_matrix(5, 3, 1));
    const LsqrResult r = lsqr_morozov(A, Vector::Zero(5));
    EXPECT_EQ(r.reason, StopReason::zero_rhs);
    EXPECT_EQ(r.x.norm(), 0.0);
    MorozovOptions o;
    o.tau = 0.5;
    EXPECT_THROW(lsqr_morozov(A, Vector::Ones(5), o), std::invalid_argument);
}

TEST(Cg, IdentityConvergesInOneIteration) {
    const Vector rhs = standard_normal_vector(6, 1);
    const CgResult r = cg_spd(LinearOperator::identity(6), rhs, 1e-12, 10);
    EXPECT_EQ(r.iterations, 1);
    EXPECT_LE((r.x - rhs).norm(), 1e-14);
}

TEST(Cg, SpdMatchesDenseCholesky) {
    const DenseMatrix B = standard_normal_matrix(5, 5, 2);
    const DenseMatrix M = B * B.transpose() + DenseMatrix::Identity(5, 5);
    const Vector rhs = standard_normal_vector(5, 3);
    const CgResult r = cg_spd(LinearOperator::from_dense(M), rhs, 1e-13, 50);
    EXPECT_TRUE(r.converged);
    const Vector oracle = M.llt().solve(rhs);
    EXPECT_LE((r.x - oracle).norm(), 1e-8 * oracle.norm());
}

TEST(Cg, SingularConsistentSystem) {
    const DenseMatrix B = standard_normal_matrix(8, 3, 4);
    const DenseMatrix M = B * B.transpose();
    const Vector rhs = M * standard_normal_vector(8, 5);
    const CgResult r = cg_spd(LinearOperator::from_dense(M), rhs, 1e-10 * rhs.norm(), 50);
    EXPECT_TRUE(r.converged);
    EXPECT_LE((M * r.x - rhs).norm(), 1e-9 * rhs.norm());
}

TEST(Cg, NonSymmetricOperatorRejected) {
    DenseMatrix M = DenseMatrix::Identity(4, 4);
    M(0, 3) = 1.0;
    EXPECT_THROW(cg_spd(LinearOperator::from_dense(M), Vector::Ones(4), 1e-10, 10), std::invalid_argument);
}

TEST(SparseSpd, ScaledIdentity) {
    SparseMatrix M(5, 5);
    M.setIdentity();
    M *= 2.0;
    const Vector x = sparse_spd_solve(M, Vector::Constant(5, 2.0));
    EXPECT_LE((x - Vector::Ones(5)).norm(), 1e-14);
}

TEST(SparseSpd, ShiftedPathLaplacianMatchesDense) {
    const Index n = 12;
    const double lambda = 3.0;
    std::vector<Eigen::Triplet<double>> t;
    for (Index i = 0; i < n; ++i) {
        double deg = 0.0;
        if (i > 0) t.emplace_back(i, i - 1, -1.0), deg += 1.0;
        if (i + 1 < n) t.emplace_back(i, i + 1, -1.0), deg += 1.0;
        t.emplace_back(i, i, deg + 1.0 / (lambda * lambda));
    }
    SparseMatrix M(n, n);
    M.setFromTriplets(t.begin(), t.end());
    const Vector e1 = Vector::Unit(n, 0);
    const Vector oracle = DenseMatrix(M).partialPivLu().solve(e1);
    EXPECT_LE((sparse_spd_solve(M, e1) - oracle).norm(), 1e-8 * oracle.norm());
}

TEST(SparseSpd, IndefiniteRejected) {
    SparseMatrix M(2, 2);
    M.insert(0, 0) = 1.0;
    M.insert(1, 1) = -1.0;
    EXPECT_THROW(sparse_spd_solve(M, Vector::Ones(2)), std::runtime_error);
}

TEST(SparseSpd, SolverReusableAcrossRightHandSides) {
    const DenseMatrix B = standard_normal_matrix(6, 6, 11);
    const SparseMatrix M = DenseMatrix(B * B.transpose() + DenseMatrix::Identity(6, 6)).sparseView();
    const SpdSolver solver(M);
    for (std::uint64_t s = 0; s < 3; ++s) {
        const Vector rhs = standard_normal_vector(6, 20 + s);
        EXPECT_LE((M * solver.solve(rhs) - rhs).norm(), 1e-10 * rhs.norm());
    }
}

TEST(Symmetry, DetectsAsymmetricPattern) {
    SparseMatrix M(3, 3);
    M.insert(0, 1) = 1.0;
    EXPECT_FALSE(is_symmetric(M));
    M.insert(1, 0) = 1.0;
    EXPECT_TRUE(is_symmetric(M));
}

TEST(SparseLayout, CompressedRowsHaveIncreasingColumns) {
    const SparseMatrix M = standard_normal_matrix(8, 8, 12).sparseView(1.0, 0.8);
    ASSERT_TRUE(M.isCompressed());
    for (Index r = 0; r < M.outerSize(); ++r) {
        EXPECT_LE(M.outerIndexPtr()[r], M.outerIndexPtr()[r + 1]);
        for (Index k = M.outerIndexPtr()[r] + 1; k < M.outerIndexPtr()[r + 1]; ++k)
            EXPECT_LT(M.innerIndexPtr()[k - 1], M.innerIndexPtr()[k]);
    }
}

TEST(SampleStd, KnownValues) {
    EXPECT_NEAR(sample_std({1.0, 2.0, 3.0, 4.0}), std::sqrt(5.0 / 3.0), 1e-15);
}
