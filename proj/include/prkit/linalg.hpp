#pragma once

#include <Eigen/Dense>

#include <vector>

namespace prkit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Cholesky factorization of a symmetric positive definite matrix plus an
/// explicit diagonal boost. The boost actually used is recorded so callers
/// can surface it; nothing is retried silently.
struct SpdFactor {
    Eigen::LLT<Matrix> llt;
    double jitter_applied = 0.0;
    int dim = 0;

    Vector solve(const Vector& b) const;
    Matrix solve(const Matrix& b) const;
    /// Solve L^T x = b (L the lower-triangular factor).
    Vector solve_lt(const Vector& b) const;
    /// log det of the factored matrix (source + jitter I).
    double log_det() const;
    /// Lower-triangular factor L with source + jitter I = L L^T.
    Matrix matrix_l() const;
};

/// Factor a + jitter*I. Throws NotPositiveDefinite if a pivot fails, which
/// signals the caller to raise the regularizer or climb its own jitter
/// ladder.
SpdFactor cholesky_factor(const Matrix& a, double jitter = 0.0);

/// Jitter retry ladder: factor with jitter 0, then escalate a relative boost
/// by 10x per step up to max_jitter_rel * mean(|diag|). The applied value is
/// visible in the result. Throws NotPositiveDefinite when exhausted.
SpdFactor cholesky_ladder(const Matrix& a, double max_jitter_rel = 1e-6);

/// Solve (source + jitter I) x = b.
Vector spd_solve(const SpdFactor& f, const Vector& b);
Matrix spd_solve(const SpdFactor& f, const Matrix& b);

/// Top-k eigenpairs of a symmetric matrix, eigenvalues descending.
struct SymEig {
    Vector eigenvalues;   // length k, non-increasing
    Matrix eigenvectors;  // columns match eigenvalues
};

SymEig sym_eig_truncated(const Matrix& a, int k);

/// Least-squares polynomial fit of degree `degree` through (x, y), lowest
/// coefficient first. Uses SVD; `rank_deficient` flags a degenerate design.
struct PolyFit {
    std::vector<double> coefficients;
    bool rank_deficient = false;
};

PolyFit polyfit(const std::vector<double>& x, const std::vector<double>& y, int degree);

double polyval(const std::vector<double>& coefficients, double x);

}  // namespace prkit
