// Independent reference implementations used to check the library's linear
// algebra and calculus from a different angle. Everything here is written
// from first principles (no Eigen decompositions) and favors clarity over
// speed; test matrices are small.
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace oracles {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Matrix inverse by Gauss-Jordan elimination with partial pivoting.
inline Mat gauss_jordan_inverse(Mat a) {
    const long n = a.rows();
    if (n != a.cols()) throw std::invalid_argument("gauss_jordan_inverse: not square");
    Mat inv = Mat::Identity(n, n);
    for (long col = 0; col < n; ++col) {
        long pivot = col;
        for (long r = col + 1; r < n; ++r) {
            if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
        }
        if (a(pivot, col) == 0.0) throw std::runtime_error("gauss_jordan_inverse: singular");
        if (pivot != col) {
            a.row(pivot).swap(a.row(col));
            inv.row(pivot).swap(inv.row(col));
        }
        const double d = a(col, col);
        a.row(col) /= d;
        inv.row(col) /= d;
        for (long r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a(r, col);
            if (f != 0.0) {
                a.row(r) -= f * a.row(col);
                inv.row(r) -= f * inv.row(col);
            }
        }
    }
    return inv;
}

/// Symmetric eigendecomposition via the cyclic Jacobi method.
/// Returns eigenvalues ascending; columns of `vectors` correspond.
struct JacobiEig {
    Vec values;
    Mat vectors;
};

inline JacobiEig jacobi_eig(Mat a, int max_sweeps = 100, double tol = 1e-14) {
    const long n = a.rows();
    if (n != a.cols()) throw std::invalid_argument("jacobi_eig: not square");
    Mat v = Mat::Identity(n, n);
    const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (long p = 0; p < n; ++p)
            for (long q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (std::sqrt(off) <= tol * scale * n) break;
        for (long p = 0; p < n; ++p) {
            for (long q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) <= tol * scale * 1e-2) continue;
                // Rotation angle that annihilates a(p,q) in J^T A J.
                const double tau = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (tau >= 0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(tau * tau + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                const double app = a(p, p), aqq = a(q, q), apq = a(p, q);
                for (long k = 0; k < n; ++k) {
                    if (k == p || k == q) continue;
                    const double akp = c * a(k, p) - s * a(k, q);
                    const double akq = s * a(k, p) + c * a(k, q);
                    a(k, p) = a(p, k) = akp;
                    a(k, q) = a(q, k) = akq;
                }
                a(p, p) = c * c * app - 2.0 * s * c * apq + s * s * aqq;
                a(q, q) = s * s * app + 2.0 * s * c * apq + c * c * aqq;
                a(p, q) = a(q, p) = 0.0;
                for (long k = 0; k < n; ++k) {
                    const double vkp = c * v(k, p) - s * v(k, q);
                    const double vkq = s * v(k, p) + c * v(k, q);
                    v(k, p) = vkp;
                    v(k, q) = vkq;
                }
            }
        }
    }
    // Sort eigenvalues (diagonal of the rotated matrix) ascending.
    std::vector<long> order(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(),
              [&](long i, long j) { return a(i, i) < a(j, j); });
    JacobiEig out;
    out.values.resize(n);
    out.vectors.resize(n, n);
    for (long i = 0; i < n; ++i) {
        out.values(i) = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
        out.vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
    }
    return out;
}

/// Central finite-difference gradient of a scalar function.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x,
                       double h = 1e-6) {
    Vec g(x.size());
    Vec xp = x;
    for (long i = 0; i < x.size(); ++i) {
        const double step = h * std::max(1.0, std::abs(x(i)));
        xp(i) = x(i) + step;
        const double fp = f(xp);
        xp(i) = x(i) - step;
        const double fm = f(xp);
        xp(i) = x(i);
        g(i) = (fp - fm) / (2.0 * step);
    }
    return g;
}

/// Central finite-difference derivative of a scalar function of one variable.
inline double fd_derivative(const std::function<double(double)>& f, double x,
                            double h = 1e-6) {
    const double step = h * std::max(1.0, std::abs(x));
    return (f(x + step) - f(x - step)) / (2.0 * step);
}

/// Trapezoid-rule expectation E[g(u)] over u ~ N(0,1) on a wide fixed grid.
/// Slow but entirely independent of Gauss-Hermite quadrature.
inline double gaussian_expectation(const std::function<double(double)>& g,
                                   double half_width = 12.0, int n = 40001) {
    const double dx = 2.0 * half_width / (n - 1);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = -half_width + i * dx;
        const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
        acc += w * g(x) * std::exp(-0.5 * x * x);
    }
    return acc * dx / std::sqrt(2.0 * M_PI);
}

/// Trapezoid-rule expectation E[g(u,v)] over standard bivariate normals with
/// correlation rho.
inline double bivariate_gaussian_expectation(const std::function<double(double, double)>& g,
                                             double rho, double half_width = 10.0,
                                             int n = 1201) {
    // v = rho*u + sqrt(1-rho^2)*s with independent u, s.
    const double root = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    return gaussian_expectation(
        [&](double u) {
            return gaussian_expectation(
                [&](double s) { return g(u, rho * u + root * s); }, half_width,
                n);
        },
        half_width, n);
}

}  // namespace oracles
