#pragma once

// 2-D vectors and symmetric 2x2 matrices. Everything the continuous worlds
// and the Frechet metric need; deliberately no general matrix library.

#include <array>
#include <cmath>
#include <stdexcept>

namespace gensched {

struct Vec2 {
    double x = 0.0, y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }

    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm2() const { return x * x + y * y; }
    double norm() const { return std::sqrt(norm2()); }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

// Symmetric 2x2 matrix [[a, b], [b, c]].
struct Mat2 {
    double a = 0.0, b = 0.0, c = 0.0;

    Mat2() = default;
    Mat2(double a_, double b_, double c_) : a(a_), b(b_), c(c_) {}

    static Mat2 identity() { return {1.0, 0.0, 1.0}; }
    static Mat2 diag(double d) { return {d, 0.0, d}; }

    double det() const { return a * c - b * b; }
    double trace() const { return a + c; }
    bool spd() const { return det() > 0.0 && trace() > 0.0; }

    Mat2 operator+(const Mat2& o) const { return {a + o.a, b + o.b, c + o.c}; }
    Mat2 operator-(const Mat2& o) const { return {a - o.a, b - o.b, c - o.c}; }
    Mat2 operator*(double s) const { return {a * s, b * s, c * s}; }

    Vec2 mul(const Vec2& v) const { return {a * v.x + b * v.y, b * v.x + c * v.y}; }

    Mat2 inverse() const {
        const double d = det();
        if (d == 0.0) throw std::invalid_argument("Mat2::inverse: singular matrix");
        return {c / d, -b / d, a / d};
    }

    // Eigenvalues of a symmetric 2x2, descending.
    std::array<double, 2> eigenvalues() const {
        const double mean = 0.5 * trace();
        const double disc = std::sqrt(std::max(0.0, mean * mean - det()));
        return {mean + disc, mean - disc};
    }

    // Lower Cholesky factor L with L L^T = M.
    std::array<double, 3> cholesky() const {
        if (!(a > 0.0)) throw std::invalid_argument("Mat2::cholesky: not SPD");
        const double l11 = std::sqrt(a);
        const double l21 = b / l11;
        const double rest = c - l21 * l21;
        if (!(rest > 0.0)) throw std::invalid_argument("Mat2::cholesky: not SPD");
        return {l11, l21, std::sqrt(rest)};
    }
};

// General (possibly asymmetric) product of two symmetric matrices, needed by
// the Frechet trace term; returned as row-major 2x2.
inline std::array<double, 4> sym_product(const Mat2& p, const Mat2& q) {
    return {p.a * q.a + p.b * q.b, p.a * q.b + p.b * q.c,
            p.b * q.a + p.c * q.b, p.b * q.b + p.c * q.c};
}

inline double gaussian2_log_density(const Vec2& x, const Vec2& mean, const Mat2& cov) {
    const double d = cov.det();
    if (!(d > 0.0)) throw std::invalid_argument("gaussian2_log_density: covariance not SPD");
    const Vec2 r = x - mean;
    const double quad = (cov.c * r.x * r.x - 2.0 * cov.b * r.x * r.y + cov.a * r.y * r.y) / d;
    return -0.918938533204672742 * 2.0 - 0.5 * std::log(d) - 0.5 * quad;
}

inline double logsumexp(const double* vals, std::size_t n) {
    double m = vals[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, vals[i]);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(vals[i] - m);
    return m + std::log(s);
}

}  // namespace gensched
