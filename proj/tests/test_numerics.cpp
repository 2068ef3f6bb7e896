#include "hebb/numerics.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace hebb;

namespace {

Mat random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    Rng rng(seed);
    Mat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
    return m;
}

Mat naive_covariance(const Mat& x) {
    const auto n = x.rows();
    const auto d = x.cols();
    Mat c = Mat::Zero(d, d);
    std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
    for (Eigen::Index j = 0; j < d; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) mean[static_cast<std::size_t>(j)] += x(i, j);
        mean[static_cast<std::size_t>(j)] /= static_cast<double>(n);
    }
    for (Eigen::Index a = 0; a < d; ++a)
        for (Eigen::Index b = 0; b < d; ++b) {
            double s = 0.0;
            for (Eigen::Index i = 0; i < n; ++i)
                s += (x(i, a) - mean[static_cast<std::size_t>(a)]) * (x(i, b) - mean[static_cast<std::size_t>(b)]);
            c(a, b) = s / static_cast<double>(n - 1);
        }
    return c;
}

// Characteristic polynomial det(tI - C) via Faddeev-LeVerrier; coefficients highest degree first.
std::vector<double> characteristic_polynomial(const Mat& c) {
    const auto n = c.rows();
    std::vector<double> coeffs{1.0};
    Mat m = Mat::Zero(n, n);
    Mat identity = Mat::Identity(n, n);
    double ck = 1.0;
    for (Eigen::Index k = 1; k <= n; ++k) {
        m = c * m + ck * identity;
        ck = -(c * m).trace() / static_cast<double>(k);
        coeffs.push_back(ck);
    }
    return coeffs;
}

double horner(const std::vector<double>& coeffs, double t) {
    double v = 0.0;
    for (double a : coeffs) v = v * t + a;
    return v;
}

// All real roots of a polynomial with only real, simple roots inside [-bound, bound].
std::vector<double> real_roots(const std::vector<double>& coeffs, double bound) {
    std::vector<double> roots;
    const int steps = 200000;
    double prev_t = -bound;
    double prev_v = horner(coeffs, prev_t);
    for (int s = 1; s <= steps; ++s) {
        const double t = -bound + 2.0 * bound * s / steps;
        const double v = horner(coeffs, t);
        if ((prev_v < 0) != (v < 0)) {
            double lo = prev_t;
            double hi = t;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                if ((horner(coeffs, lo) < 0) == (horner(coeffs, mid) < 0))
                    lo = mid;
                else
                    hi = mid;
            }
            roots.push_back(0.5 * (lo + hi));
        }
        prev_t = t;
        prev_v = v;
    }
    std::sort(roots.begin(), roots.end(), std::greater<>());
    return roots;
}

}  // namespace

TEST_CASE("covariance of two samples") {
    Mat x(2, 2);
    x << 0, 0, 2, 0;
    const Mat c = covariance(x);
    CHECK(c(0, 0) == doctest::Approx(2.0));
    CHECK(c(0, 1) == 0.0);
    CHECK(c(1, 0) == 0.0);
    CHECK(c(1, 1) == 0.0);
}

TEST_CASE("covariance of a constant dataset is zero") {
    const Mat x = Mat::Constant(7, 3, 4.25);
    CHECK(covariance(x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("covariance matches a naive double loop") {
    const Mat x = random_matrix(20, 5, 11);
    CHECK((covariance(x) - naive_covariance(x)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("covariance rejects fewer than two samples") {
    CHECK_THROWS_AS(covariance(Mat::Ones(1, 3)), DegenerateInputError);
}

TEST_CASE("covariance is symmetric positive semi-definite") {
    const Mat c = covariance(random_matrix(6, 10, 3));  // rank deficient on purpose
    CHECK((c - c.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(sym_eig_descending(c).eigenvalues.minCoeff() >= -1e-10);
}

TEST_CASE("eigendecomposition of simple matrices") {
    const SymSpectrum id = sym_eig_descending(Mat::Identity(3, 3));
    for (int i = 0; i < 3; ++i) CHECK(id.eigenvalues[i] == doctest::Approx(1.0));

    Mat d = Mat::Zero(3, 3);
    d.diagonal() << 1, 3, 2;
    const SymSpectrum s = sym_eig_descending(d);
    CHECK(s.eigenvalues[0] == doctest::Approx(3.0));
    CHECK(s.eigenvalues[1] == doctest::Approx(2.0));
    CHECK(s.eigenvalues[2] == doctest::Approx(1.0));
    CHECK(std::abs(s.eigenvectors(1, 0)) == doctest::Approx(1.0));
    CHECK(std::abs(s.eigenvectors(2, 1)) == doctest::Approx(1.0));
    CHECK(std::abs(s.eigenvectors(0, 2)) == doctest::Approx(1.0));
}

TEST_CASE("eigenvalues match characteristic polynomial roots") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Mat r = random_matrix(4, 4, 100 + seed);
        const Mat c = 0.5 * (r + r.transpose());
        const SymSpectrum s = sym_eig_descending(c);
        const double bound = c.cwiseAbs().rowwise().sum().maxCoeff() + 1.0;
        const auto roots = real_roots(characteristic_polynomial(c), bound);
        REQUIRE(roots.size() == 4);
        const Vec only = sym_eigenvalues_descending(c);
        for (int i = 0; i < 4; ++i) {
            CHECK(std::abs(s.eigenvalues[i] - roots[static_cast<std::size_t>(i)]) <= 1e-8);
            CHECK(std::abs(only[i] - roots[static_cast<std::size_t>(i)]) <= 1e-8);
        }
    }
}

TEST_CASE("eigendecomposition invariants on a random covariance") {
    const Mat c = covariance(random_matrix(80, 30, 5));
    const SymSpectrum s = sym_eig_descending(c);
    const double fro = c.norm();
    for (Eigen::Index i = 1; i < s.eigenvalues.size(); ++i) CHECK(s.eigenvalues[i] <= s.eigenvalues[i - 1]);
    CHECK((s.eigenvectors.transpose() * s.eigenvectors - Mat::Identity(30, 30)).cwiseAbs().maxCoeff() <= 1e-8);
    const Mat rebuilt = s.eigenvectors * s.eigenvalues.asDiagonal() * s.eigenvectors.transpose();
    CHECK((c - rebuilt).norm() / fro <= 1e-8);
    for (Eigen::Index i = 0; i < 30; ++i)
        CHECK((c * s.eigenvectors.col(i) - s.eigenvalues[i] * s.eigenvectors.col(i)).norm() <= 1e-8 * fro);
    CHECK(std::abs(s.eigenvalues.sum() - c.trace()) <= 1e-8 * std::abs(c.trace()));
}

TEST_CASE("eigendecomposition rejects asymmetric input") {
    Mat c = Mat::Identity(3, 3);
    c(0, 1) = 1e-6;
    CHECK_THROWS_AS(sym_eig_descending(c), ContractError);
    CHECK_THROWS_AS(sym_eigenvalues_descending(c), ContractError);
}

TEST_CASE("linear fit of an exact line") {
    std::vector<double> xs{0, 1, 2, 3, 4};
    std::vector<double> ys;
    for (double x : xs) ys.push_back(-2.0 * x + 1.0);
    const LineFit f = linear_fit(xs, ys);
    CHECK(f.slope == doctest::Approx(-2.0));
    CHECK(f.intercept == doctest::Approx(1.0));
    CHECK(f.slope_stderr == doctest::Approx(0.0));
}

TEST_CASE("linear fit of a constant") {
    std::vector<double> xs{1, 2, 3, 4};
    std::vector<double> ys{5, 5, 5, 5};
    CHECK(linear_fit(xs, ys).slope == doctest::Approx(0.0));
}

TEST_CASE("linear fit matches the normal equations") {
    Rng rng(9);
    std::vector<double> xs;
    std::vector<double> ys;
    for (int i = 0; i < 100; ++i) {
        xs.push_back(rng.uniform() * 10.0);
        ys.push_back(0.7 * xs.back() - 3.0 + 0.5 * rng.normal());
    }
    // Normal equations [n sx; sx sxx] [b; m] = [sy; sxy], solved by Cramer's rule.
    double n = 100, sx = 0, sxx = 0, sy = 0, sxy = 0;
    for (int i = 0; i < 100; ++i) {
        sx += xs[i];
        sxx += xs[i] * xs[i];
        sy += ys[i];
        sxy += xs[i] * ys[i];
    }
    const double det = n * sxx - sx * sx;
    const double slope = (n * sxy - sx * sy) / det;
    const double intercept = (sxx * sy - sx * sxy) / det;
    double ssr = 0;
    for (int i = 0; i < 100; ++i) ssr += std::pow(ys[i] - intercept - slope * xs[i], 2);
    const double stderr_oracle = std::sqrt(ssr / (n - 2) * n / det);

    const LineFit f = linear_fit(xs, ys);
    CHECK(std::abs(f.slope - slope) <= 1e-10);
    CHECK(std::abs(f.intercept - intercept) <= 1e-10);
    CHECK(std::abs(f.slope_stderr - stderr_oracle) <= 1e-10);

    // Sample order does not matter.
    std::vector<double> rx(xs.rbegin(), xs.rend());
    std::vector<double> ry(ys.rbegin(), ys.rend());
    const LineFit g = linear_fit(rx, ry);
    CHECK(std::abs(g.slope - f.slope) <= 1e-12);
    CHECK(std::abs(g.intercept - f.intercept) <= 1e-12);
}

TEST_CASE("linear fit rejects degenerate input") {
    std::vector<double> xs{2, 2, 2};
    std::vector<double> ys{1, 2, 3};
    CHECK_THROWS_AS(linear_fit(xs, ys), SingularFitError);
    std::vector<double> two{1, 2};
    CHECK_THROWS_AS(linear_fit(two, two), SingularFitError);
}

TEST_CASE("rng streams are reproducible and seed dependent") {
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 1000; ++i) REQUIRE(a.normal() == b.normal());

    Rng c(1);
    Rng d(2);
    bool differ = false;
    for (int i = 0; i < 10; ++i) differ |= c.normal() != d.normal();
    CHECK(differ);
}

TEST_CASE("standard normal moments") {
    Rng rng(2024);
    const int n = 1000000;
    double s = 0.0;
    double s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal();
        s += v;
        s2 += v * v;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    CHECK(std::abs(mean) < 5e-3);
    CHECK(std::abs(var - 1.0) < 5e-3);
}

TEST_CASE("uniform and bounded integers") {
    Rng rng(5);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        REQUIRE(rng.below(7) < 7);
    }
    std::vector<int> items{0, 1, 2, 3, 4, 5, 6, 7};
    rng.shuffle(items);
    std::vector<int> sorted = items;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}
