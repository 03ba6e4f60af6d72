#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>

#include "misgrad/linalg.hpp"
#include "support/oracles.hpp"

using namespace misgrad;

TEST_CASE("solve_regularized: identity and diagonal systems") {
    Mat eye = Mat::identity(2);
    Vec x = solve_regularized(eye, {2.0, 3.0}, 0.0);
    CHECK(x[0] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(x[1] == doctest::Approx(3.0).epsilon(1e-14));

    Mat d(2, 2);
    d(0, 0) = 2.0;
    d(1, 1) = 4.0;
    Vec y = solve_regularized(d, {2.0, 8.0}, 0.0);
    CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(y[1] == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("solve_regularized: rank-deficient system with small ridge") {
    Mat a(2, 2, 1.0); // [[1,1],[1,1]], singular
    Vec b{1.0, 1.0};
    Vec x = solve_regularized(a, b, 1e-6);

    // Reference via Gauss-Jordan on the explicitly regularized system.
    Mat ar = a;
    ar(0, 0) += 1e-6;
    ar(1, 1) += 1e-6;
    Vec ref = oracle::dense_solve(ar, b);
    CHECK(oracle::max_abs_diff(x, ref) < 1e-10);

    Vec ax = oracle::mat_vec(a, x);
    CHECK(std::abs(ax[0] - b[0]) < 1e-4);
    CHECK(std::abs(ax[1] - b[1]) < 1e-4);
    CHECK(x[0] == doctest::Approx(x[1]).epsilon(1e-9));
}

TEST_CASE("solve_regularized: random SPD round trip against known solution") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(9)); // up to 10
        // SPD via G G^T + n*I, condition number stays mild.
        Mat g(n, n);
        for (double& v : g.data) v = 2.0 * rng.uniform() - 1.0;
        Mat a(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double s = 0;
                for (int k = 0; k < n; ++k) s += g(i, k) * g(j, k);
                a(i, j) = s + (i == j ? 0.5 * n : 0.0);
            }
        Vec truth(n);
        for (double& v : truth) v = 2.0 * rng.uniform() - 1.0;
        Vec b = oracle::mat_vec(a, truth);
        Vec x = solve_regularized(a, b, 0.0);
        CHECK(oracle::max_rel_diff(x, truth) < 1e-8);
    }
}

TEST_CASE("solve_regularized: bitwise deterministic") {
    Rng rng(3);
    Mat a(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j <= i; ++j) {
            const double v = rng.uniform();
            a(i, j) = v;
            a(j, i) = v;
        }
    for (int i = 0; i < 4; ++i) a(i, i) += 4.0;
    Vec b{1.0, -2.0, 0.5, 3.0};
    Vec x1 = solve_regularized(a, b, 1e-9);
    Vec x2 = solve_regularized(a, b, 1e-9);
    for (int i = 0; i < 4; ++i) CHECK(x1[i] == x2[i]);
}

TEST_CASE("solve_regularized: errors") {
    Mat a(2, 2); // all zero: escalation from ridge 0 cannot rescue a zero matrix
    CHECK_THROWS_AS(solve_regularized(a, {1.0, 1.0}, 0.0), SingularSystem);

    Mat nf = Mat::identity(2);
    nf(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(solve_regularized(nf, {1.0, 1.0}, 0.0), NonFiniteInput);

    Mat rect(2, 3);
    CHECK_THROWS_AS(solve_regularized(rect, {1.0, 1.0}, 0.0), ShapeMismatch);

    Mat eye = Mat::identity(3);
    CHECK_THROWS_AS(solve_regularized(eye, {1.0, 1.0}, 0.0), ShapeMismatch);
}

TEST_CASE("rng: determinism and distinct draws") {
    Rng a(1), b(1);
    const double first = a.uniform();
    const double second = a.uniform();
    CHECK(first != second);
    CHECK(b.uniform() == first);
    CHECK(b.uniform() == second);

    Rng c(1, 5), d(1, 6);
    CHECK(c.uniform() != d.uniform()); // streams differ
}

TEST_CASE("rng: uniform marginal statistics") {
    Rng rng(42);
    double sum = 0.0;
    double lo = 1.0, hi = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        sum += u;
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    const double mean = sum / n;
    CHECK(mean > 0.49);
    CHECK(mean < 0.51);
    CHECK(lo < 0.001);
    CHECK(hi > 0.999);
}

TEST_CASE("rng: below covers range uniformly enough") {
    Rng rng(9);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) ++counts[rng.below(7)];
    for (int c : counts) {
        CHECK(c > 9000);
        CHECK(c < 11000);
    }
}

TEST_CASE("rng: normal has sane first moments") {
    Rng rng(11);
    double sum = 0, sumsq = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sumsq += x * x;
    }
    CHECK(std::abs(sum / n) < 0.02);
    CHECK(sumsq / n == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("vector helpers") {
    Vec a{1.0, 2.0, 2.0};
    CHECK(norm2(a) == doctest::Approx(3.0));
    Vec y{1.0, 1.0, 1.0};
    axpy(2.0, a, y);
    CHECK(y[2] == doctest::Approx(5.0));
    CHECK(all_finite(y));
    y[0] = std::numeric_limits<double>::infinity();
    CHECK(!all_finite(y));
}
