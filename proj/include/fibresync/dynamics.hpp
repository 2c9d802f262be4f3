// Orbit iteration, fibered Lyapunov exponents, SL(2,R) cocycle growth and
// fibre synchronization.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fibresync/base_trajectory.hpp"
#include "fibresync/circle.hpp"
#include "fibresync/maps.hpp"

namespace fibresync {

struct OrbitRecord {
    std::vector<std::pair<double, double>> points; // (x_j, y_j), j = 0..n
    std::vector<double> log_dy;                    // log |d_y f(x_j, y_j)|, j = 0..n-1
    std::vector<bool> in_G;                        // y_j in G, j = 0..n-1 (optional)
    std::optional<std::size_t> singular_at;        // index where d_y f blew up or vanished

    std::size_t steps() const { return log_dy.size(); }
};

namespace detail {

inline bool hits_singularity(const FibreMapDescriptor& f, double y)
{
    return std::find(f.smooth_except.begin(), f.smooth_except.end(), y) != f.smooth_except.end();
}

} // namespace detail

/// Iterates F n times from (x0, y0). Base points come from the digit stream.
/// If G is supplied, in_G records membership of each y_j.
inline OrbitRecord iterate_orbit(const SkewProduct& m, const BaseTrajectory& base, CirclePoint y0, std::size_t n,
                                 const ArcUnion* G = nullptr)
{
    if (n < 1) throw std::invalid_argument("iterate_orbit: n must be >= 1");
    if (base.base() != m.b) throw std::invalid_argument("iterate_orbit: base trajectory uses a different b");
    OrbitRecord rec;
    rec.points.reserve(n + 1);
    rec.log_dy.reserve(n);
    auto cur = base.cursor();
    double y = y0.value();
    rec.points.emplace_back(cur.point(), y);
    for (std::size_t j = 0; j < n; ++j) {
        double x = cur.point();
        double ld = std::log(std::abs(m.fibre.dy(x, y)));
        if (detail::hits_singularity(m.fibre, y) || !std::isfinite(ld)) {
            rec.singular_at = j;
            break;
        }
        if (G) rec.in_G.push_back(G->contains(CirclePoint(y)));
        rec.log_dy.push_back(ld);
        y = m.fibre.eval(x, y);
        cur.advance();
        rec.points.emplace_back(cur.point(), y);
    }
    return rec;
}

struct LyapunovEstimate {
    std::size_t n = 0;       // steps actually taken
    double value = 0.0;      // (1/n) sum log |d_y f|
    double limsup_proxy = 0; // max running average over the trailing tenth
    std::vector<std::pair<std::size_t, double>> partials;
    bool truncated = false;
};

/// Finite-time fibered Lyapunov exponent at (x0, y0); keeps about
/// `trace_points` running averages for convergence plots.
inline LyapunovEstimate fibered_lyapunov(const SkewProduct& m, const BaseTrajectory& base, CirclePoint y0, std::size_t n,
                                         std::size_t trace_points = 1000)
{
    if (n < 1) throw std::invalid_argument("fibered_lyapunov: n must be >= 1");
    if (base.base() != m.b) throw std::invalid_argument("fibered_lyapunov: base trajectory uses a different b");
    LyapunovEstimate est;
    const std::size_t stride = std::max<std::size_t>(1, n / std::max<std::size_t>(1, trace_points));
    const std::size_t tail_start = n - n / 10;
    auto cur = base.cursor();
    double y = y0.value();
    double sum = 0.0;
    est.limsup_proxy = -std::numeric_limits<double>::infinity();
    std::size_t j = 0;
    for (; j < n; ++j) {
        double x = cur.point();
        double ld = std::log(std::abs(m.fibre.dy(x, y)));
        if (detail::hits_singularity(m.fibre, y) || !std::isfinite(ld)) {
            est.truncated = true;
            break;
        }
        sum += ld;
        y = m.fibre.eval(x, y);
        cur.advance();
        double avg = sum / static_cast<double>(j + 1);
        if ((j + 1) % stride == 0 || j + 1 == n) est.partials.emplace_back(j + 1, avg);
        if (j + 1 >= tail_start) est.limsup_proxy = std::max(est.limsup_proxy, avg);
    }
    est.n = j;
    est.value = j > 0 ? sum / static_cast<double>(j) : 0.0;
    if (!std::isfinite(est.limsup_proxy)) est.limsup_proxy = est.value;
    return est;
}

/// (1/n) log ||A^n(x0)|| with the running product renormalized every step.
inline double max_lyapunov_sl2(const SchrodingerParams& p, const BaseTrajectory& base, std::size_t n)
{
    if (n < 1) throw std::invalid_argument("max_lyapunov_sl2: n must be >= 1");
    auto cur = base.cursor();
    Matrix2 prod;
    double log_norm = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        prod = sl2_step(p, CirclePoint(cur.point())) * prod;
        double s = prod.spectral_norm();
        log_norm += std::log(s);
        prod = prod.scaled(1.0 / s);
        cur.advance();
    }
    return log_norm / static_cast<double>(n);
}

/// Angle in (-pi/2, pi/2] carried by the projective fibre coordinate u.
inline double projective_angle(double u) { return pi * (u - 0.5); }

/// (-2/n) sum log |tan(theta_i)| along the projective orbit of u0.
inline double schrodinger_tan_product(const SchrodingerParams& p, const BaseTrajectory& base, CirclePoint u0,
                                      std::size_t n)
{
    SkewProduct m = schrodinger_projective(p);
    auto cur = base.cursor();
    double u = u0.value();
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        sum += std::log(std::abs(std::tan(projective_angle(u))));
        u = m.fibre.eval(cur.point(), u);
        cur.advance();
    }
    return -2.0 * sum / static_cast<double>(n);
}

/// Circular diameter of a finite point set: 1 minus the largest cyclic gap.
inline double circular_diameter(std::vector<double> ys)
{
    if (ys.size() < 2) return 0.0;
    std::sort(ys.begin(), ys.end());
    double gap = 1.0 - (ys.back() - ys.front());
    for (std::size_t i = 1; i < ys.size(); ++i) gap = std::max(gap, ys[i] - ys[i - 1]);
    return 1.0 - gap;
}

/// Fibre points driven by one base trajectory; returns the diameter at each
/// step j = 0..n. If `trace` is given it receives every y_j^{(i)}.
inline std::vector<double> sync_diameter(const SkewProduct& m, const BaseTrajectory& base,
                                         const std::vector<CirclePoint>& ys, std::size_t n,
                                         std::vector<std::vector<double>>* trace = nullptr)
{
    if (ys.empty()) throw std::invalid_argument("sync_diameter: need at least one fibre point");
    std::vector<double> cur_y;
    cur_y.reserve(ys.size());
    for (auto y : ys) cur_y.push_back(y.value());
    std::vector<double> diam;
    diam.reserve(n + 1);
    auto cur = base.cursor();
    for (std::size_t j = 0;; ++j) {
        diam.push_back(circular_diameter(cur_y));
        if (trace) trace->push_back(cur_y);
        if (j == n) break;
        double x = cur.point();
        for (auto& y : cur_y) y = m.fibre.eval(x, y);
        cur.advance();
    }
    return diam;
}

} // namespace fibresync
