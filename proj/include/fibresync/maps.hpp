// Fibre-map descriptors and the built-in skew-product families.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fibresync/circle.hpp"

namespace fibresync {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Closed real interval; used for lifted value ranges.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    double width() const { return hi - lo; }
    double mid() const { return 0.5 * (lo + hi); }
    Interval operator+(const Interval& o) const { return {lo + o.lo, hi + o.hi}; }
};

namespace detail {

/// Calls fn(lo, hi) on consecutive pieces of [lo, hi] split at every point
/// congruent to `phase` modulo `period`.
template <typename Fn>
void split_periodic(double lo, double hi, double period, double phase, Fn&& fn)
{
    double k = std::floor((lo - phase) / period) + 1.0;
    double cut = phase + k * period;
    while (cut < hi) {
        fn(lo, cut);
        lo = cut;
        cut += period;
    }
    fn(lo, hi);
}

/// Extrema of a*sin(2*pi*k*t) on [lo, hi] (k > 0).
inline Interval sine_range(double amp, int freq, double lo, double hi)
{
    auto v = [&](double t) { return amp * std::sin(two_pi * freq * t); };
    double mn = std::min(v(lo), v(hi));
    double mx = std::max(v(lo), v(hi));
    // critical points t = (1/4 + m/2)/k
    double m0 = std::ceil((lo * freq - 0.25) * 2.0);
    for (double m = m0; (0.25 + m / 2.0) / freq <= hi; m += 1.0) {
        double c = v((0.25 + m / 2.0) / freq);
        mn = std::min(mn, c);
        mx = std::max(mx, c);
    }
    return {mn, mx};
}

} // namespace detail

/// Base-dependent summand g(x) of an additive fibre map. Values are lifted
/// reals; each piece has integer degree so that g is continuous on T.
class GPiece {
public:
    enum class Kind { zero, cos3pi, sine, linear };

    static GPiece zero() { return GPiece(Kind::zero, 0.0, 0); }
    /// (1 - cos(3 pi x)) / 2, degree one.
    static GPiece cos3pi() { return GPiece(Kind::cos3pi, 1.0, 1); }
    static GPiece sine(double amplitude, int frequency)
    {
        if (frequency < 1) throw std::invalid_argument("sine g: frequency must be >= 1");
        return GPiece(Kind::sine, amplitude, frequency);
    }
    static GPiece linear(int degree) { return GPiece(Kind::linear, 0.0, degree); }

    Kind kind() const { return kind_; }

    /// x is taken in [0, 1].
    double operator()(double x) const
    {
        switch (kind_) {
        case Kind::zero: return 0.0;
        case Kind::cos3pi: return 0.5 * (1.0 - std::cos(3.0 * pi * x));
        case Kind::sine: return amp_ * std::sin(two_pi * freq_ * x);
        case Kind::linear: return freq_ * x;
        }
        return 0.0;
    }

    double deriv(double x) const
    {
        switch (kind_) {
        case Kind::zero: return 0.0;
        case Kind::cos3pi: return 1.5 * pi * std::sin(3.0 * pi * x);
        case Kind::sine: return amp_ * two_pi * freq_ * std::cos(two_pi * freq_ * x);
        case Kind::linear: return freq_;
        }
        return 0.0;
    }

    double deriv_sup() const
    {
        switch (kind_) {
        case Kind::zero: return 0.0;
        case Kind::cos3pi: return 1.5 * pi;
        case Kind::sine: return std::abs(amp_) * two_pi * freq_;
        case Kind::linear: return std::abs(freq_);
        }
        return 0.0;
    }

    /// Exact range of g over [lo, hi] with 0 <= lo <= hi <= 1.
    Interval range(double lo, double hi) const
    {
        switch (kind_) {
        case Kind::zero: return {0.0, 0.0};
        case Kind::linear: {
            double a = freq_ * lo, b = freq_ * hi;
            return {std::min(a, b), std::max(a, b)};
        }
        case Kind::sine: return detail::sine_range(amp_, freq_, lo, hi);
        case Kind::cos3pi: {
            double a = (*this)(lo), b = (*this)(hi);
            Interval r{std::min(a, b), std::max(a, b)};
            for (double c : {1.0 / 3.0, 2.0 / 3.0}) {
                if (c > lo && c < hi) {
                    double v = (*this)(c);
                    r.lo = std::min(r.lo, v);
                    r.hi = std::max(r.hi, v);
                }
            }
            return r;
        }
        }
        return {0.0, 0.0};
    }

    nlohmann::json to_json() const
    {
        switch (kind_) {
        case Kind::zero: return {{"kind", "zero"}};
        case Kind::cos3pi: return {{"kind", "cos3pi"}};
        case Kind::sine: return {{"kind", "sine"}, {"amplitude", amp_}, {"frequency", freq_}};
        case Kind::linear: return {{"kind", "linear"}, {"degree", freq_}};
        }
        return {};
    }

private:
    GPiece(Kind k, double amp, int freq) : kind_(k), amp_(amp), freq_(freq) {}

    Kind kind_;
    double amp_;
    int freq_;
};

/// Example 1 parameters. c1 is fixed by requiring the lift to gain exactly 1
/// over a turn: c0 (1 - 3 eps) + 3 eps c1 = 1.
class Example1Params {
public:
    static constexpr double slope_ceiling = 0.18;

    explicit Example1Params(double eps_tilde, double c0 = 0.15) : eps_(eps_tilde), c0_(c0)
    {
        if (!(eps_tilde > 0.0 && eps_tilde < 0.125)) throw std::invalid_argument("eps_tilde out of (0, 1/8)");
        if (!(c0 > 0.0 && c0 <= slope_ceiling)) throw std::invalid_argument("c0 out of (0, 0.18]");
        c1_ = (1.0 - c0_ * (1.0 - 3.0 * eps_)) / (3.0 * eps_);
        if (!(c1_ > 1.0)) throw std::invalid_argument("Example1Params: inner slope must exceed 1");
    }

    double eps_tilde() const { return eps_; }
    double c0() const { return c0_; }
    double c1() const { return c1_; }

private:
    double eps_;
    double c0_;
    double c1_ = 0.0;
};

/// Degree-one C^1 circle map: slope c0 on the long arc through 0, slope c1 on
/// (1/2 - eps, 1/2 + eps), and quadratic ramps in between.
class Example1H {
public:
    explicit Example1H(Example1Params p)
        : p_(p),
          a_(0.5 - 2.0 * p.eps_tilde()),
          b_(0.5 - p.eps_tilde()),
          c_(0.5 + p.eps_tilde()),
          d_(0.5 + 2.0 * p.eps_tilde())
    {
        double e = p.eps_tilde();
        h_a_ = p.c0() * a_;
        h_b_ = h_a_ + 0.5 * (p.c0() + p.c1()) * e;
        h_c_ = h_b_ + p.c1() * 2.0 * e;
        h_d_ = h_c_ + 0.5 * (p.c0() + p.c1()) * e;
    }

    const Example1Params& params() const { return p_; }

    /// Lift on R: H(y + 1) = H(y) + 1, H(0) = 0.
    double lift(double y) const
    {
        double k = std::floor(y);
        return k + lift_unit(y - k);
    }

    double deriv(double y) const { return deriv_unit(y - std::floor(y)); }

    /// h' at t in [0, 1].
    double deriv_unit(double t) const
    {
        const double c0 = p_.c0(), c1 = p_.c1(), e = p_.eps_tilde();
        if (t <= a_ || t >= d_) return c0;
        if (t < b_) return c0 + (c1 - c0) * (t - a_) / e;
        if (t <= c_) return c1;
        return c1 - (c1 - c0) * (t - c_) / e;
    }

    /// sup |h'| over the lifted interval [lo, hi].
    double deriv_sup(double lo, double hi) const
    {
        if (hi - lo >= 1.0) return p_.c1();
        double best = 0.0;
        detail::split_periodic(lo, hi, 1.0, 0.0, [&](double l, double h) {
            double k = std::floor(l);
            double tl = l - k, th = h - k;
            // h' is unimodal on [0,1] with its plateau on [b, c]
            if (tl <= c_ && th >= b_) best = std::max(best, p_.c1());
            best = std::max({best, deriv_unit(tl), deriv_unit(th)});
        });
        return best;
    }

    /// Exact lifted image of [lo, hi]; h is increasing.
    Interval image(double lo, double hi) const { return {lift(lo), lift(hi)}; }

private:
    double lift_unit(double t) const
    {
        const double c0 = p_.c0(), c1 = p_.c1(), e = p_.eps_tilde();
        if (t <= a_) return c0 * t;
        if (t <= b_) {
            double s = t - a_;
            return h_a_ + c0 * s + 0.5 * (c1 - c0) * s * s / e;
        }
        if (t <= c_) return h_b_ + c1 * (t - b_);
        if (t <= d_) {
            double s = t - c_;
            return h_c_ + c1 * s - 0.5 * (c1 - c0) * s * s / e;
        }
        return h_d_ + c0 * (t - d_);
    }

    Example1Params p_;
    double a_, b_, c_, d_;
    double h_a_ = 0, h_b_ = 0, h_c_ = 0, h_d_ = 0;
};

/// Fibre summand h(y) of an additive fibre map.
class HPiece {
public:
    enum class Kind { identity, shift, example1, sine };

    static HPiece identity() { return HPiece(Kind::identity); }
    static HPiece shift(double offset)
    {
        HPiece h(Kind::shift);
        h.offset_ = offset;
        return h;
    }
    static HPiece example1(Example1Params p)
    {
        HPiece h(Kind::example1);
        h.ex1_.emplace_back(p);
        return h;
    }
    /// offset + amplitude * sin(2 pi y); degree zero.
    static HPiece sine(double offset, double amplitude)
    {
        HPiece h(Kind::sine);
        h.offset_ = offset;
        h.amp_ = amplitude;
        return h;
    }

    Kind kind() const { return kind_; }
    const Example1H* example1_h() const { return ex1_.empty() ? nullptr : &ex1_.front(); }

    double operator()(double y) const
    {
        switch (kind_) {
        case Kind::identity: return y;
        case Kind::shift: return y + offset_;
        case Kind::example1: return ex1_.front().lift(y);
        case Kind::sine: return offset_ + amp_ * std::sin(two_pi * y);
        }
        return y;
    }

    double deriv(double y) const
    {
        switch (kind_) {
        case Kind::identity:
        case Kind::shift: return 1.0;
        case Kind::example1: return ex1_.front().deriv(y);
        case Kind::sine: return amp_ * two_pi * std::cos(two_pi * y);
        }
        return 1.0;
    }

    double deriv_sup() const
    {
        switch (kind_) {
        case Kind::identity:
        case Kind::shift: return 1.0;
        case Kind::example1: return ex1_.front().params().c1();
        case Kind::sine: return std::abs(amp_) * two_pi;
        }
        return 1.0;
    }

    /// sup |h'| over the lifted interval [lo, hi].
    double deriv_sup(double lo, double hi) const
    {
        switch (kind_) {
        case Kind::identity:
        case Kind::shift: return 1.0;
        case Kind::example1: return ex1_.front().deriv_sup(lo, hi);
        case Kind::sine: {
            // |cos(2 pi y)| peaks at y = m/2
            if (hi - lo >= 0.5 || std::floor(2.0 * hi) > std::floor(2.0 * lo) || std::floor(2.0 * lo) == 2.0 * lo)
                return deriv_sup();
            return std::max(std::abs(deriv(lo)), std::abs(deriv(hi)));
        }
        }
        return 1.0;
    }

    /// Lifted range of h over [lo, hi].
    Interval image(double lo, double hi) const
    {
        switch (kind_) {
        case Kind::identity: return {lo, hi};
        case Kind::shift: return {lo + offset_, hi + offset_};
        case Kind::example1: return ex1_.front().image(lo, hi);
        case Kind::sine: {
            Interval r = detail::sine_range(amp_, 1, lo, hi);
            return {offset_ + r.lo, offset_ + r.hi};
        }
        }
        return {lo, hi};
    }

    nlohmann::json to_json() const
    {
        switch (kind_) {
        case Kind::identity: return {{"kind", "identity"}};
        case Kind::shift: return {{"kind", "shift"}, {"offset", offset_}};
        case Kind::example1: {
            const auto& p = ex1_.front().params();
            return {{"kind", "example1"}, {"eps_tilde", p.eps_tilde()}, {"c0", p.c0()}};
        }
        case Kind::sine: return {{"kind", "sine"}, {"offset", offset_}, {"amplitude", amp_}};
        }
        return {};
    }

private:
    explicit HPiece(Kind k) : kind_(k) {}

    Kind kind_;
    double offset_ = 0.0;
    double amp_ = 0.0;
    std::vector<Example1H> ex1_; // at most one element
};

/// Evaluatable fibre map f(x, y) with its partial derivatives and the
/// certified bounds the certification and cylinder code relies on.
struct FibreMapDescriptor {
    std::string family;
    nlohmann::json params;

    std::function<double(double, double)> eval; // wrapped into [0,1)
    std::function<double(double, double)> dx;
    std::function<double(double, double)> dy;

    double dx_bound = 0.0; // sup |d_x f|
    double dy_bound = 0.0; // sup |d_y f|
    double r_bound = 1.0;  // max(1, dx_bound, dy_bound)

    std::vector<double> smooth_except;

    /// sup over x in T and lifted y in [lo, hi] of |d_y f|.
    std::function<double(double, double)> dy_envelope;

    /// Lifted range of f over [x_lo, x_hi] x [y_lo, y_hi]; 0 <= x_lo <= x_hi <= 1.
    std::function<Interval(double, double, double, double)> enclosure;

    /// Lower bound of |d_y f| over the whole torus (0 when unknown).
    double dy_floor = 0.0;

    /// Set for maps of the form f = g(x) + h(y): ranges of g over x-cells and
    /// of h over lifted y-intervals. Lets grid scans reuse the x-part.
    std::function<Interval(double, double)> x_part;
    std::function<Interval(double, double)> y_part;

    bool separable() const { return static_cast<bool>(x_part) && static_cast<bool>(y_part); }
};

struct SkewProduct {
    int b = 2;
    FibreMapDescriptor fibre;

    SkewProduct() = default;
    SkewProduct(int base, FibreMapDescriptor f) : b(base), fibre(std::move(f))
    {
        if (b < 2) throw std::invalid_argument("b must be an integer >= 2");
    }

    std::pair<CirclePoint, CirclePoint> eval_F(CirclePoint x, CirclePoint y) const
    {
        return {CirclePoint(static_cast<double>(b) * x.value()), CirclePoint(fibre.eval(x.value(), y.value()))};
    }
};

/// (x, y) -> (b x, g(x) + h(y)).
inline SkewProduct make_additive(int b, GPiece g, HPiece h, std::string family = "additive")
{
    FibreMapDescriptor f;
    f.family = std::move(family);
    f.params = {{"b", b}, {"g", g.to_json()}, {"h", h.to_json()}};
    f.eval = [g, h](double x, double y) { return wrap(g(x) + h(y)); };
    f.dx = [g](double x, double) { return g.deriv(x); };
    f.dy = [h](double, double y) { return h.deriv(y); };
    f.dx_bound = g.deriv_sup();
    f.dy_bound = h.deriv_sup();
    f.r_bound = std::max({1.0, f.dx_bound, f.dy_bound});
    f.dy_envelope = [h](double lo, double hi) { return h.deriv_sup(lo, hi); };
    f.enclosure = [g, h](double xl, double xh, double yl, double yh) { return g.range(xl, xh) + h.image(yl, yh); };
    f.x_part = [g](double xl, double xh) { return g.range(xl, xh); };
    f.y_part = [h](double yl, double yh) { return h.image(yl, yh); };
    switch (h.kind()) {
    case HPiece::Kind::identity:
    case HPiece::Kind::shift: f.dy_floor = 1.0; break;
    case HPiece::Kind::example1: f.dy_floor = h.example1_h()->params().c0(); break;
    case HPiece::Kind::sine: f.dy_floor = 0.0; break;
    }
    return SkewProduct(b, std::move(f));
}

inline SkewProduct example1_map(const Example1Params& p)
{
    SkewProduct m = make_additive(7, GPiece::cos3pi(), HPiece::example1(p), "example1");
    m.fibre.params = {{"eps_tilde", p.eps_tilde()}, {"c0", p.c0()}};
    return m;
}

/// h_eps as a standalone circle map.
inline CirclePoint example1_h(const Example1Params& p, CirclePoint y)
{
    return CirclePoint(Example1H(p).lift(y.value()));
}

/// Potential v(x) of the Schrodinger cocycle.
class Potential {
public:
    enum class Kind { cos2pi, constant };

    static Potential cos2pi() { return Potential(Kind::cos2pi, 0.0); }
    static Potential constant(double value) { return Potential(Kind::constant, value); }

    Kind kind() const { return kind_; }

    double operator()(double x) const { return kind_ == Kind::cos2pi ? std::cos(two_pi * x) : value_; }
    double deriv(double x) const { return kind_ == Kind::cos2pi ? -two_pi * std::sin(two_pi * x) : 0.0; }
    double deriv_sup() const { return kind_ == Kind::cos2pi ? two_pi : 0.0; }

    Interval range(double lo, double hi) const
    {
        if (kind_ == Kind::constant) return {value_, value_};
        double a = (*this)(lo), b = (*this)(hi);
        Interval r{std::min(a, b), std::max(a, b)};
        // extrema at x = m/2
        for (double m = std::ceil(2.0 * lo); m / 2.0 <= hi; m += 1.0) {
            double v = (*this)(m / 2.0);
            r.lo = std::min(r.lo, v);
            r.hi = std::max(r.hi, v);
        }
        return r;
    }

    Interval global_range() const { return kind_ == Kind::cos2pi ? Interval{-1.0, 1.0} : Interval{value_, value_}; }

    nlohmann::json to_json() const
    {
        if (kind_ == Kind::cos2pi) return "cos2pi";
        return {{"constant", value_}};
    }

private:
    Potential(Kind k, double v) : kind_(k), value_(v) {}
    Kind kind_;
    double value_;
};

struct SchrodingerParams {
    double lambda = 1.0;
    double energy = 0.0;
    Potential potential = Potential::cos2pi();
    int b = 2;

    SchrodingerParams() = default;
    SchrodingerParams(double lam, double e, Potential v, int base) : lambda(lam), energy(e), potential(v), b(base)
    {
        if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be > 0");
        if (b < 2) throw std::invalid_argument("b must be an integer >= 2");
    }

    double coupling(double x) const { return lambda * potential(x) - energy; }
};

struct Matrix2 {
    double a = 1, b = 0, c = 0, d = 1; // [[a, b], [c, d]]

    double det() const { return a * d - b * c; }
    Matrix2 operator*(const Matrix2& o) const
    {
        return {a * o.a + b * o.c, a * o.b + b * o.d, c * o.a + d * o.c, c * o.b + d * o.d};
    }
    Matrix2 scaled(double s) const { return {a * s, b * s, c * s, d * s}; }

    /// Largest singular value.
    double spectral_norm() const
    {
        double p = std::hypot(a + d, b - c);
        double q = std::hypot(a - d, b + c);
        return 0.5 * (p + q);
    }
};

/// A(x) = [[0, 1], [-1, lambda v(x) - E]].
inline Matrix2 sl2_step(const SchrodingerParams& p, CirclePoint x)
{
    return {0.0, 1.0, -1.0, p.coupling(x.value())};
}

namespace detail {

/// sup over c in [cl, ch] and a in [amin, amax] of (1 + c^2) / (1 + (a + c)^2).
/// Ends may be infinite.
inline double projective_slope_sup(double cl, double ch, double amin, double amax)
{
    // substitute a' = -a so the ratio reads (1 + c^2) / (1 + dist(c, [lo, hi])^2)
    const double lo = -amax, hi = -amin;
    auto ratio = [&](double c) {
        double dist = c > hi ? c - hi : (c < lo ? lo - c : 0.0);
        return (1.0 + c * c) / (1.0 + dist * dist);
    };
    double best = 1.0; // limit at |c| -> infinity
    auto consider = [&](double c) {
        if (std::isfinite(c) && c >= cl && c <= ch) best = std::max(best, ratio(c));
    };
    consider(cl);
    consider(ch);
    consider(lo);
    consider(hi);
    consider(0.5 * (hi + std::sqrt(hi * hi + 4.0)));
    consider(0.5 * (lo - std::sqrt(lo * lo + 4.0)));
    return best;
}

} // namespace detail

/// Projective action of the Schrodinger cocycle. The fibre angle
/// theta in S = [-pi/2, pi/2]/~ is carried by u = theta/pi + 1/2 in [0,1), so
/// u = 1/2 is the angle 0 where the arctan formula is singular.
inline SkewProduct schrodinger_projective(const SchrodingerParams& p)
{
    FibreMapDescriptor f;
    f.family = "schrodinger";
    f.params = {{"lambda", p.lambda}, {"energy", p.energy}, {"potential", p.potential.to_json()}, {"b", p.b}};

    // On u in (k - 1/2, k + 1/2) the angle is theta = pi u - pi/2 (mod pi) and
    // -cot(theta) = tan(pi u), so the lifted image is k + atan(a + tan(pi u))/pi + 1/2.
    auto lifted = [](double a, double u) {
        double k = std::round(u);
        double t = u - k;
        if (std::abs(t) == 0.5) return k + (t > 0 ? 1.0 : 0.0);
        return k + std::atan(a + std::tan(pi * t)) / pi + 0.5;
    };
    f.eval = [p, lifted](double x, double u) { return wrap(lifted(p.coupling(x), u)); };
    f.dy = [p](double x, double u) {
        double a = p.coupling(x);
        double c = std::cos(pi * u), s = std::sin(pi * u);
        double w = a * c + s;
        return 1.0 / (c * c + w * w);
    };
    f.dx = [p](double x, double u) {
        double a = p.coupling(x);
        double c = std::cos(pi * u), s = std::sin(pi * u);
        double w = a * c + s;
        return p.lambda * p.potential.deriv(x) * c * c / (pi * (c * c + w * w));
    };

    Interval vr = p.potential.global_range();
    const double amin = p.lambda * vr.lo - p.energy;
    const double amax = p.lambda * vr.hi - p.energy;
    const double inf = std::numeric_limits<double>::infinity();

    f.dx_bound = p.lambda * p.potential.deriv_sup() / pi;
    f.dy_bound = detail::projective_slope_sup(-inf, inf, amin, amax);
    f.r_bound = std::max({1.0, f.dx_bound, f.dy_bound});
    f.smooth_except = {0.5};

    f.dy_envelope = [amin, amax, inf, dyb = f.dy_bound](double lo, double hi) {
        if (hi - lo >= 1.0) return dyb;
        double best = 0.0;
        // branches of tan(pi u) break at half-integers
        detail::split_periodic(lo, hi, 1.0, 0.5, [&](double l, double h) {
            double k = std::round(0.5 * (l + h));
            double tl = std::abs(l - k) >= 0.5 ? -inf : std::tan(pi * (l - k));
            double th = std::abs(h - k) >= 0.5 ? inf : std::tan(pi * (h - k));
            best = std::max(best, detail::projective_slope_sup(tl, th, amin, amax));
        });
        return best;
    };

    f.enclosure = [p, lifted](double xl, double xh, double ul, double uh) {
        if (uh - ul >= 1.0) return Interval{0.0, 1.0 + (uh - ul)};
        Interval vr = p.potential.range(xl, xh);
        double a_lo = p.lambda * vr.lo - p.energy;
        double a_hi = p.lambda * vr.hi - p.energy;
        // increasing in both a and u
        return Interval{lifted(a_lo, ul), lifted(a_hi, uh)};
    };

    return SkewProduct(p.b, std::move(f));
}

/// The set {|tan theta| > sqrt(lambda)} in the u-coordinate: one arc around u = 0.
inline ArcUnion schrodinger_target_region(double lambda)
{
    double half = 0.5 - std::atan(std::sqrt(lambda)) / pi;
    if (half <= 0.0) return {};
    return ArcUnion::normalize({Arc(-half, 2.0 * half)});
}

} // namespace fibresync
