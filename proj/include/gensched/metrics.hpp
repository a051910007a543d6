#pragma once

// Desk-scale evaluation: closed-form 2-D Frechet distance, exact total
// variation for enumerable discrete worlds, mode coverage, and average NLL.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "gensched/linalg.hpp"
#include "gensched/worlds.hpp"

namespace gensched {

struct GaussianFit {
    Vec2 mean;
    Mat2 cov;  // symmetric sample covariance (1/(N-1))
    std::size_t count = 0;
};

inline GaussianFit fit_gaussian(const std::vector<Vec2>& samples) {
    if (samples.size() < 2) throw std::invalid_argument("fit_gaussian: need at least 2 samples");
    GaussianFit fit;
    fit.count = samples.size();
    for (const Vec2& s : samples) fit.mean += s;
    fit.mean = fit.mean * (1.0 / samples.size());
    double a = 0.0, b = 0.0, c = 0.0;
    for (const Vec2& s : samples) {
        const Vec2 d = s - fit.mean;
        a += d.x * d.x;
        b += d.x * d.y;
        c += d.y * d.y;
    }
    const double norm = 1.0 / (samples.size() - 1);
    fit.cov = {a * norm, b * norm, c * norm};
    return fit;
}

// Principal square root of an SPD 2x2 matrix:
// S = (M + sqrt(det M) I) / sqrt(tr M + 2 sqrt(det M)).
inline Mat2 sqrt_spd_2x2(const Mat2& m) {
    if (!m.spd()) throw std::invalid_argument("sqrt_spd_2x2: matrix not SPD");
    const double sd = std::sqrt(m.det());
    const double denom = std::sqrt(m.trace() + 2.0 * sd);
    return {(m.a + sd) / denom, m.b / denom, (m.c + sd) / denom};
}

inline constexpr double kFrechetCovReg = 1e-6;
inline constexpr std::size_t kFrechetMinSamples = 32;

// Squared Frechet distance between the Gaussians described by two fits:
// |mu_A - mu_B|^2 + tr(S_A + S_B - 2 (S_A S_B)^{1/2}), computed through the
// symmetrized product sqrt(C S_B C) with C = sqrt(S_A).
inline double frechet_from_fits(const GaussianFit& fa, const GaussianFit& fb) {
    const Mat2 sa = fa.cov + Mat2::diag(kFrechetCovReg);
    const Mat2 sb = fb.cov + Mat2::diag(kFrechetCovReg);
    const Mat2 c = sqrt_spd_2x2(sa);
    // c * sb * c stays symmetric for symmetric inputs
    const std::array<double, 4> t = sym_product(c, sb);
    const Mat2 inner{t[0] * c.a + t[1] * c.b, t[0] * c.b + t[1] * c.c,
                     t[2] * c.b + t[3] * c.c};
    const Mat2 root = sqrt_spd_2x2(inner);
    const double mean_term = (fa.mean - fb.mean).norm2();
    const double trace_term = sa.trace() + sb.trace() - 2.0 * root.trace();
    const double d2 = mean_term + trace_term;
    if (d2 < -1e-8) throw std::runtime_error("frechet: negative distance beyond tolerance");
    return std::max(d2, 0.0);
}

inline double frechet_2d(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
    if (a.size() < kFrechetMinSamples || b.size() < kFrechetMinSamples)
        throw std::invalid_argument("frechet_2d: need at least 32 samples per side");
    return frechet_from_fits(fit_gaussian(a), fit_gaussian(b));
}

inline double tv_distance(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw std::invalid_argument("tv_distance: length mismatch");
    double sp = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        sp += p[i];
        sq += q[i];
    }
    if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9)
        throw std::invalid_argument("tv_distance: inputs must sum to 1");
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
    return 0.5 * acc;
}

// Fraction of the class's mixture components with at least one sample within
// radius_multiplier * sqrt(lambda_max(cov)) of the component mean.
inline double mode_coverage(const std::vector<Vec2>& samples, const GmmWorld& world, int cls,
                            double radius_multiplier) {
    if (!(radius_multiplier > 0.0))
        throw std::invalid_argument("mode_coverage: multiplier must be positive");
    const std::vector<GmmComponent>& comps = world.components(cls);
    int covered = 0;
    for (const GmmComponent& comp : comps) {
        const double radius = radius_multiplier * std::sqrt(comp.cov.eigenvalues()[0]);
        const double r2 = radius * radius;
        for (const Vec2& s : samples) {
            if ((s - comp.mean).norm2() <= r2) {
                ++covered;
                break;
            }
        }
    }
    return static_cast<double>(covered) / comps.size();
}

inline double avg_nll(const std::vector<Vec2>& samples, const GmmWorld& world, int cls) {
    if (samples.empty()) throw std::invalid_argument("avg_nll: empty sample set");
    double acc = 0.0;
    for (const Vec2& s : samples) acc -= world.log_density(s, cls);
    return acc / samples.size();
}

inline double avg_nll(const std::vector<std::vector<int>>& samples, const DiscreteWorld& world,
                      int cls) {
    if (samples.empty()) throw std::invalid_argument("avg_nll: empty sample set");
    double acc = 0.0;
    for (const std::vector<int>& s : samples) acc -= world.log_density(s, cls);
    return acc / samples.size();
}

}  // namespace gensched
