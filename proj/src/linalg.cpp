#include "prkit/linalg.hpp"

#include "prkit/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <string>

namespace prkit {

namespace {

void require_square_symmetric(const Matrix& a, const char* who) {
    if (a.rows() != a.cols()) {
        throw DimensionMismatch(std::string(who) + ": matrix is " + std::to_string(a.rows()) +
                                "x" + std::to_string(a.cols()));
    }
    if (a.rows() == 0) throw EmptyInput(std::string(who) + ": empty matrix");
    if (!a.allFinite()) throw NotPositiveDefinite(std::string(who) + ": non-finite entries");
    const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
        throw DimensionMismatch(std::string(who) + ": matrix is not symmetric");
    }
}

}  // namespace

Vector SpdFactor::solve(const Vector& b) const {
    if (b.size() != dim) {
        throw DimensionMismatch("spd_solve: rhs length " + std::to_string(b.size()) +
                                " vs factor dim " + std::to_string(dim));
    }
    return llt.solve(b);
}

Matrix SpdFactor::solve(const Matrix& b) const {
    if (b.rows() != dim) {
        throw DimensionMismatch("spd_solve: rhs rows " + std::to_string(b.rows()) +
                                " vs factor dim " + std::to_string(dim));
    }
    return llt.solve(b);
}

Vector SpdFactor::solve_lt(const Vector& b) const {
    if (b.size() != dim) {
        throw DimensionMismatch("spd solve_lt: rhs length " + std::to_string(b.size()) +
                                " vs factor dim " + std::to_string(dim));
    }
    return llt.matrixU().solve(b);
}

double SpdFactor::log_det() const {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

Matrix SpdFactor::matrix_l() const {
    return llt.matrixL();
}

SpdFactor cholesky_factor(const Matrix& a, double jitter) {
    require_square_symmetric(a, "cholesky_factor");
    if (jitter < 0.0) throw ConfigError("cholesky_factor: negative jitter");

    SpdFactor f;
    f.dim = static_cast<int>(a.rows());
    f.jitter_applied = jitter;
    if (jitter == 0.0) {
        f.llt.compute(a);
    } else {
        Matrix work = a;
        work.diagonal().array() += jitter;
        f.llt.compute(work);
    }
    if (f.llt.info() != Eigen::Success) {
        throw NotPositiveDefinite("cholesky_factor: pivot failure at jitter " +
                                  std::to_string(jitter));
    }
    return f;
}

SpdFactor cholesky_ladder(const Matrix& a, double max_jitter_rel) {
    require_square_symmetric(a, "cholesky_ladder");
    const double scale = std::max(a.diagonal().array().abs().mean(), 1e-300);
    double jitter = 0.0;
    for (;;) {
        try {
            return cholesky_factor(a, jitter);
        } catch (const NotPositiveDefinite&) {
            jitter = (jitter == 0.0) ? scale * 1e-14 : jitter * 10.0;
            if (jitter > scale * max_jitter_rel) throw;
        }
    }
}

Vector spd_solve(const SpdFactor& f, const Vector& b) { return f.solve(b); }
Matrix spd_solve(const SpdFactor& f, const Matrix& b) { return f.solve(b); }

SymEig sym_eig_truncated(const Matrix& a, int k) {
    require_square_symmetric(a, "sym_eig_truncated");
    if (k < 1 || k > a.rows()) {
        throw DimensionMismatch("sym_eig_truncated: k=" + std::to_string(k) + " outside [1, " +
                                std::to_string(a.rows()) + "]");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    if (es.info() != Eigen::Success) {
        throw ConvergenceFailure("sym_eig_truncated: eigensolver did not converge", 0.0);
    }
    // Eigen returns ascending order; emit the top k descending.
    const long n = a.rows();
    SymEig out;
    out.eigenvalues.resize(k);
    out.eigenvectors.resize(n, k);
    for (int i = 0; i < k; ++i) {
        out.eigenvalues(i) = es.eigenvalues()(n - 1 - i);
        out.eigenvectors.col(i) = es.eigenvectors().col(n - 1 - i);
    }
    return out;
}

PolyFit polyfit(const std::vector<double>& x, const std::vector<double>& y, int degree) {
    if (x.size() != y.size()) {
        throw DimensionMismatch("polyfit: x has " + std::to_string(x.size()) +
                                " points, y has " + std::to_string(y.size()));
    }
    if (x.empty()) throw EmptyInput("polyfit: no data");
    if (degree < 0) throw ConfigError("polyfit: negative degree");

    const int n = static_cast<int>(x.size());
    const int m = degree + 1;
    Matrix design(n, m);
    for (int i = 0; i < n; ++i) {
        double p = 1.0;
        for (int j = 0; j < m; ++j) {
            design(i, j) = p;
            p *= x[static_cast<std::size_t>(i)];
        }
    }
    Eigen::JacobiSVD<Matrix> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-12 * std::max(n, m));

    PolyFit fit;
    fit.rank_deficient = svd.rank() < std::min(n, m);
    Vector yv = Eigen::Map<const Vector>(y.data(), n);
    Vector c = svd.solve(yv);
    fit.coefficients.assign(c.data(), c.data() + c.size());
    return fit;
}

double polyval(const std::vector<double>& coefficients, double x) {
    double acc = 0.0;
    for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) {
        acc = acc * x + *it;
    }
    return acc;
}

}  // namespace prkit
