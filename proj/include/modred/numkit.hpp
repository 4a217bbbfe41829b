#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace modred {

using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;
// Compressed-row storage; Eigen keeps inner indices sorted once compressed.
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Index = Eigen::Index;

/// Matrix-free linear map R^n -> R^m with its adjoint.
class LinearOperator {
public:
    using Action = std::function<Vector(const Vector&)>;

    LinearOperator(Index rows, Index cols, Action forward, Action adjoint);

    static LinearOperator from_dense(DenseMatrix A);
    static LinearOperator from_sparse(SparseMatrix A);
    static LinearOperator identity(Index n);

    Index rows() const { return rows_; }
    Index cols() const { return cols_; }

    Vector apply(const Vector& v) const;
    Vector apply_adjoint(const Vector& w) const;

    /// Materializes the operator column by column. Small problems only.
    DenseMatrix to_dense() const;

private:
    Index rows_;
    Index cols_;
    Action forward_;
    Action adjoint_;
};

/// Largest relative defect |<Av,w> - <v,A^T w>| / (|v||w||A|_est) over random probes.
double adjoint_defect(const LinearOperator& A, int probes = 10, std::uint64_t seed = 7);

enum class BasisMethod { svd, qr };

/// Orthonormal basis of the numerical column span of A. Singular values (or
/// |R_ii| for QR) below rel_tol times the largest are treated as zero.
DenseMatrix orthonormal_basis(const DenseMatrix& A, BasisMethod method = BasisMethod::svd,
                              double rel_tol = 1e-10);

struct LeanSvd {
    DenseMatrix U;  // m x r
    Vector d;       // r, nonincreasing
    DenseMatrix V;  // k x r
};

/// Thin SVD with r = min(m, k).
LeanSvd lean_svd(const DenseMatrix& A);

/// Number of singular values above rel_tol * d(0).
Index numerical_rank(const Vector& singular_values, double rel_tol = 1e-10);

enum class StopReason { discrepancy, numerical, max_iter, zero_rhs };

std::string to_string(StopReason reason);

struct MorozovOptions {
    double noise_norm = 0.0;  // 0 disables the discrepancy test
    double tau = 1.0;
    int max_iter = 1000;
    double atol = 1e-12;  // |A^T r| <= atol |A| |r|
    double btol = 1e-14;  // |r| <= btol |b|
};

struct LsqrResult {
    Vector x;
    double residual_norm = 0.0;  // |Ax - b| recomputed for the returned x
    int iterations = 0;
    StopReason reason = StopReason::max_iter;
    std::vector<double> residual_history;  // entry i: residual after i iterations

    bool reached_discrepancy() const { return reason == StopReason::discrepancy; }
};

/// LSQR (Paige & Saunders) regularized by early stopping at the first iterate
/// whose residual drops to tau * noise_norm.
LsqrResult lsqr_morozov(const LinearOperator& A, const Vector& b, const MorozovOptions& opts = {});

struct CgResult {
    Vector x;
    double residual_norm = 0.0;
    int iterations = 0;
    bool converged = false;  // residual target met
    bool stopped_by_monitor = false;
};

/// Called after each iterate; returning true ends the iteration.
using CgMonitor = std::function<bool(const Vector& x, int iteration)>;

/// Conjugate gradients for symmetric positive semidefinite operators. The
/// operator is probed for symmetry first and rejected with
/// std::invalid_argument if it fails.
CgResult cg_spd(const LinearOperator& M, const Vector& rhs, double target_residual, int max_iter,
                const CgMonitor& monitor = {});

/// Sparse Cholesky with residual verification; reusable across right-hand sides.
class SpdSolver {
public:
    explicit SpdSolver(const SparseMatrix& M);
    ~SpdSolver();
    SpdSolver(SpdSolver&&) noexcept;
    SpdSolver& operator=(SpdSolver&&) noexcept;

    Index size() const;
    /// Solves and checks |Mx - rhs| <= tol |rhs| (one refinement step allowed).
    Vector solve(const Vector& rhs, double tol = 1e-10) const;
    const SparseMatrix& matrix() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

Vector sparse_spd_solve(const SparseMatrix& M, const Vector& rhs, double tol = 1e-10);

bool is_symmetric(const SparseMatrix& M, double rel_tol = 1e-12);

/// Sample standard deviation (n - 1 normalization).
double sample_std(const std::vector<double>& values);

}  // namespace modred
