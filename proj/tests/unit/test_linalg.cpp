#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "prkit/errors.hpp"
#include "prkit/linalg.hpp"
#include "prkit/rng.hpp"

#include "oracles/oracles.hpp"

using prkit::Matrix;
using prkit::Vector;

namespace {

Matrix random_spd(prkit::Rng& rng, int n) {
    Matrix a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
    return a * a.transpose() + Matrix::Identity(n, n) * 0.1;
}

}  // namespace

TEST_CASE("cholesky of identity and scalar matrices") {
    auto fi = prkit::cholesky_factor(Matrix::Identity(3, 3));
    CHECK((fi.matrix_l() - Matrix::Identity(3, 3)).norm() == 0.0);
    Matrix s(1, 1);
    s << 4.0;
    auto fs = prkit::cholesky_factor(s);
    CHECK(fs.matrix_l()(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("cholesky factor reconstructs its input") {
    prkit::Rng rng(42);
    Matrix b(5, 5);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) b(i, j) = rng.normal();
    Matrix a = b.transpose() * b + 0.1 * Matrix::Identity(5, 5);
    auto f = prkit::cholesky_factor(a);
    Matrix l = f.matrix_l();
    CHECK((l * l.transpose() - a).norm() <= 1e-12 * a.norm());
    CHECK(f.jitter_applied == 0.0);
}

TEST_CASE("explicit jitter factors a + jitter*I") {
    Matrix a(2, 2);
    a << 1.0, 1.0, 1.0, 1.0;  // rank 1
    CHECK_THROWS_AS(prkit::cholesky_factor(a), prkit::NotPositiveDefinite);
    auto f = prkit::cholesky_factor(a, 0.5);
    Matrix l = f.matrix_l();
    Matrix target = a + 0.5 * Matrix::Identity(2, 2);
    CHECK((l * l.transpose() - target).norm() <= 1e-12 * target.norm());
    CHECK(f.jitter_applied == 0.5);
}

TEST_CASE("jitter ladder records the boost it needed") {
    Matrix a(2, 2);
    a << 1.0, 1.0, 1.0, 1.0;
    auto f = prkit::cholesky_ladder(a);
    CHECK(f.jitter_applied > 0.0);
    CHECK(f.jitter_applied <= 1e-6);
    Matrix good = Matrix::Identity(2, 2);
    CHECK(prkit::cholesky_ladder(good).jitter_applied == 0.0);
    Matrix indef(2, 2);
    indef << 1.0, 0.0, 0.0, -1.0;
    CHECK_THROWS_AS(prkit::cholesky_ladder(indef), prkit::NotPositiveDefinite);
}

TEST_CASE("cholesky input validation") {
    CHECK_THROWS_AS(prkit::cholesky_factor(Matrix::Zero(2, 3)), prkit::DimensionMismatch);
    CHECK_THROWS_AS(prkit::cholesky_factor(Matrix()), prkit::EmptyInput);
    Matrix asym(2, 2);
    asym << 1.0, 0.5, -0.5, 1.0;
    CHECK_THROWS_AS(prkit::cholesky_factor(asym), prkit::DimensionMismatch);
    Matrix nf(2, 2);
    nf << 1.0, 0.0, 0.0, std::nan("");
    CHECK_THROWS_AS(prkit::cholesky_factor(nf), prkit::NotPositiveDefinite);
}

TEST_CASE("spd_solve matches Gauss-Jordan inverse") {
    prkit::Rng rng(42);
    for (int n : {1, 2, 5, 20}) {
        Matrix a = random_spd(rng, n);
        Vector b(n);
        for (int i = 0; i < n; ++i) b(i) = rng.normal();
        Vector x = prkit::spd_solve(prkit::cholesky_factor(a), b);
        Vector x_ref = oracles::gauss_jordan_inverse(a) * b;
        CHECK((x - x_ref).norm() <= 1e-9 * (1.0 + x_ref.norm()));
    }
}

TEST_CASE("spd_solve diagonal case and dimension check") {
    Matrix d(2, 2);
    d << 2.0, 0.0, 0.0, 4.0;
    auto f = prkit::cholesky_factor(d);
    Vector b(2);
    b << 2.0, 4.0;
    Vector x = prkit::spd_solve(f, b);
    CHECK(x(0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(x(1) == doctest::Approx(1.0).epsilon(1e-15));
    Vector wrong(3);
    wrong.setZero();
    CHECK_THROWS_AS(prkit::spd_solve(f, wrong), prkit::DimensionMismatch);
}

TEST_CASE("solve then multiply round trip") {
    prkit::Rng rng(8);
    Matrix a = random_spd(rng, 7);
    Vector x(7);
    for (int i = 0; i < 7; ++i) x(i) = rng.normal();
    const double j = 0.3;
    auto f = prkit::cholesky_factor(a, j);
    Vector rhs = a * x + j * x;
    CHECK((f.solve(rhs) - x).norm() <= 1e-8 * x.norm());
}

TEST_CASE("cholesky log det matches eigenvalue oracle") {
    prkit::Rng rng(7);
    Matrix a = random_spd(rng, 6);
    auto f = prkit::cholesky_factor(a);
    auto eig = oracles::jacobi_eig(a);
    double ref = eig.values.array().log().sum();
    CHECK(f.log_det() == doctest::Approx(ref).epsilon(1e-10));
}

TEST_CASE("solve_lt inverts the upper factor") {
    prkit::Rng rng(3);
    Matrix a = random_spd(rng, 5);
    auto f = prkit::cholesky_factor(a);
    Vector b(5);
    for (int i = 0; i < 5; ++i) b(i) = rng.normal();
    Vector x = f.solve_lt(b);
    Matrix l = f.matrix_l();
    CHECK((l.transpose() * x - b).norm() <= 1e-10 * b.norm());
}

TEST_CASE("sym_eig_truncated on fixed spectra") {
    Matrix d = Vector::LinSpaced(3, 3.0, 1.0).reverse().asDiagonal();  // diag(1,2,3)
    auto top2 = prkit::sym_eig_truncated(d, 2);
    REQUIRE(top2.eigenvalues.size() == 2);
    CHECK(top2.eigenvalues(0) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(top2.eigenvalues(1) == doctest::Approx(2.0).epsilon(1e-14));

    auto id1 = prkit::sym_eig_truncated(Matrix::Identity(4, 4), 1);
    CHECK(id1.eigenvalues(0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(id1.eigenvectors.col(0).norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sym_eig_truncated matches the Jacobi oracle") {
    prkit::Rng rng(11);
    Matrix a = random_spd(rng, 8);
    a = ((a + a.transpose()) / 2.0).eval();
    auto ref = oracles::jacobi_eig(a);
    for (int k : {1, 3, 8}) {
        auto eig = prkit::sym_eig_truncated(a, k);
        REQUIRE(eig.eigenvalues.size() == k);
        for (int i = 0; i < k; ++i) {
            CHECK(eig.eigenvalues(i) ==
                  doctest::Approx(ref.values(7 - i)).epsilon(1e-8));
            double dot = std::abs(eig.eigenvectors.col(i).dot(ref.vectors.col(7 - i)));
            CHECK(dot == doctest::Approx(1.0).epsilon(1e-7));
            // Residual bound per pair.
            double res = (a * eig.eigenvectors.col(i) -
                          eig.eigenvalues(i) * eig.eigenvectors.col(i))
                             .norm();
            CHECK(res < 1e-8 * a.norm());
        }
        // Non-increasing.
        for (int i = 1; i < k; ++i) CHECK(eig.eigenvalues(i) <= eig.eigenvalues(i - 1));
    }
    CHECK_THROWS_AS(prkit::sym_eig_truncated(a, 0), prkit::DimensionMismatch);
    CHECK_THROWS_AS(prkit::sym_eig_truncated(a, 9), prkit::DimensionMismatch);
}

TEST_CASE("polyfit recovers exact polynomial coefficients") {
    // y = 2 - 3x + 0.5x^3 sampled without noise.
    std::vector<double> xs, ys;
    for (int i = 0; i <= 10; ++i) {
        double x = -1.0 + 0.2 * i;
        xs.push_back(x);
        ys.push_back(2.0 - 3.0 * x + 0.5 * x * x * x);
    }
    auto fit = prkit::polyfit(xs, ys, 3);
    REQUIRE(fit.coefficients.size() == 4);
    CHECK_FALSE(fit.rank_deficient);
    CHECK(fit.coefficients[0] == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(fit.coefficients[1] == doctest::Approx(-3.0).epsilon(1e-10));
    CHECK(fit.coefficients[2] == doctest::Approx(0.0).scale(1.0).epsilon(1e-10));
    CHECK(fit.coefficients[3] == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(prkit::polyval(fit.coefficients, 0.3) ==
          doctest::Approx(2.0 - 0.9 + 0.5 * 0.027).epsilon(1e-12));
}

TEST_CASE("polyfit flags a rank-deficient design") {
    // All x identical: cannot determine slope.
    std::vector<double> xs(5, 1.0), ys{1.0, 1.1, 0.9, 1.0, 1.0};
    auto fit = prkit::polyfit(xs, ys, 1);
    CHECK(fit.rank_deficient);
}

TEST_CASE("polyfit least squares beats nearby coefficient perturbations") {
    prkit::Rng rng(5);
    std::vector<double> xs, ys;
    for (int i = 0; i < 30; ++i) {
        double x = rng.uniform() * 4.0 - 2.0;
        xs.push_back(x);
        ys.push_back(1.0 + x - 0.3 * x * x + 0.05 * rng.normal());
    }
    auto fit = prkit::polyfit(xs, ys, 2);
    auto sse = [&](const std::vector<double>& c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            double r = prkit::polyval(c, xs[i]) - ys[i];
            acc += r * r;
        }
        return acc;
    };
    const double best = sse(fit.coefficients);
    for (std::size_t k = 0; k < fit.coefficients.size(); ++k) {
        for (double d : {-1e-3, 1e-3}) {
            auto c = fit.coefficients;
            c[k] += d;
            CHECK(sse(c) >= best);
        }
    }
}

TEST_CASE("rng normal moments and determinism") {
    prkit::Rng a(123), b(123);
    double m1 = 0.0, m2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        double x = a.normal();
        m1 += x;
        m2 += x * x;
    }
    m1 /= n;
    m2 /= n;
    CHECK(std::abs(m1) < 0.01);
    CHECK(m2 == doctest::Approx(1.0).epsilon(0.01));
    // Same seed, same stream.
    prkit::Rng a2(123);
    for (int i = 0; i < 100; ++i) CHECK(a2.normal() == b.normal());
}

TEST_CASE("rng shuffle is a permutation and seed stable") {
    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
    prkit::Rng r1(9), r2(9);
    auto v1 = v, v2 = v;
    r1.shuffle(v1);
    r2.shuffle(v2);
    CHECK(v1 == v2);
    auto sorted = v1;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == v);
}
