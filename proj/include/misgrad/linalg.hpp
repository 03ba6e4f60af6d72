#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "misgrad/errors.hpp"

namespace misgrad {

using Vec = std::vector<double>;

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vec& v) { return std::sqrt(dot(v, v)); }

// y += a * x
inline void axpy(double a, const Vec& x, Vec& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline void scale(Vec& v, double a) {
    for (double& x : v) x *= a;
}

// Dense row-major matrix of doubles. Small by design: the largest matrices
// in this library are J x P with J <= ~10 techniques.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

    double& operator()(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }

    static Mat identity(int n) {
        Mat m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double trace() const {
        double t = 0.0;
        for (int i = 0; i < rows && i < cols; ++i) t += (*this)(i, i);
        return t;
    }
};

inline bool all_finite(const Mat& m) { return all_finite(m.data); }

// Counter-based pseudorandom source (splitmix64). Identical seed and stream
// give an identical draw sequence on every platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : state_(mix(seed + 0x9E3779B97F4A7C15ULL * (stream + 1))) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    // Uniform in [0, 1), 53 bits of randomness.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller. Draws two uniforms per call.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        return r * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // Uniform integer in [0, n), n >= 1.
    std::uint32_t below(std::uint32_t n) {
        return static_cast<std::uint32_t>((static_cast<std::uint64_t>(next_u64() >> 32) * n) >> 32);
    }

  private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

// Cholesky factorization of a symmetric positive-definite matrix plus an
// optional ridge on the diagonal. Only the lower triangle of the input is
// read, so symmetry up to roundoff is tolerated.
struct Cholesky {
    Mat lower; // lower-triangular factor L with A + ridge*I = L L^T

    static std::optional<Cholesky> factor(const Mat& a, double ridge) {
        const int n = a.rows;
        Cholesky ch;
        ch.lower = Mat(n, n);
        Mat& l = ch.lower;
        double diag_scale = 0.0;
        for (int i = 0; i < n; ++i) diag_scale = std::max(diag_scale, std::abs(a(i, i)) + ridge);
        // Pivots at or below roundoff of the diagonal scale count as failure.
        const double pivot_floor = diag_scale * 1e-13;
        for (int j = 0; j < n; ++j) {
            double d = a(j, j) + ridge;
            for (int k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
            if (!(d > pivot_floor) || !std::isfinite(d)) return std::nullopt;
            const double ljj = std::sqrt(d);
            l(j, j) = ljj;
            for (int i = j + 1; i < n; ++i) {
                double s = a(i, j);
                for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
                l(i, j) = s / ljj;
            }
        }
        return ch;
    }

    // Squared ratio of extreme pivots; a cheap condition-number proxy.
    double pivot_ratio_sq() const {
        double lo = lower(0, 0), hi = lower(0, 0);
        for (int i = 1; i < lower.rows; ++i) {
            lo = std::min(lo, lower(i, i));
            hi = std::max(hi, lower(i, i));
        }
        return (hi / lo) * (hi / lo);
    }

    // Solves (L L^T) x = b by forward and back substitution.
    Vec solve(const Vec& b) const {
        const int n = lower.rows;
        Vec y(b);
        for (int i = 0; i < n; ++i) {
            double s = y[i];
            for (int k = 0; k < i; ++k) s -= lower(i, k) * y[k];
            y[i] = s / lower(i, i);
        }
        for (int i = n - 1; i >= 0; --i) {
            double s = y[i];
            for (int k = i + 1; k < n; ++k) s -= lower(k, i) * y[k];
            y[i] = s / lower(i, i);
        }
        return y;
    }
};

// Solves (A + ridge*I) x = b for a small symmetric system. If the Cholesky
// factorization fails, the ridge is escalated once (x10, or seeded from the
// matrix scale when ridge is zero) before giving up.
inline Vec solve_regularized(const Mat& a, const Vec& b, double ridge) {
    if (a.rows != a.cols) throw ShapeMismatch("solve_regularized: matrix must be square");
    if (static_cast<int>(b.size()) != a.rows) throw ShapeMismatch("solve_regularized: rhs length mismatch");
    if (!all_finite(a) || !all_finite(b) || !std::isfinite(ridge))
        throw NonFiniteInput("solve_regularized: non-finite input");

    auto ch = Cholesky::factor(a, ridge);
    if (!ch) {
        const int n = a.rows;
        const double escalated = ridge > 0.0 ? ridge * 10.0 : 1e-10 * a.trace() / std::max(n, 1);
        ch = Cholesky::factor(a, escalated);
        if (!ch) throw SingularSystem("solve_regularized: system singular after ridge escalation");
    }
    return ch->solve(b);
}

} // namespace misgrad
