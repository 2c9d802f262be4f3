// Circle arithmetic on T = R/Z: points, open arcs and finite arc unions.
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

namespace fibresync {

/// Canonical representative of t in [0,1).
inline double wrap(double t)
{
    if (!std::isfinite(t)) throw std::invalid_argument("wrap: non-finite input");
    double r = t - std::floor(t);
    // t slightly below an integer rounds up to 1.0
    return r >= 1.0 ? 0.0 : r;
}

/// Signed shortest displacement from a to b, in [-1/2, 1/2).
inline double circ_diff(double a, double b)
{
    double d = wrap(b - a);
    return d >= 0.5 ? d - 1.0 : d;
}

class CirclePoint {
public:
    constexpr CirclePoint() = default;
    explicit CirclePoint(double t) : value_(wrap(t)) {}

    double value() const { return value_; }

    CirclePoint operator+(double t) const { return CirclePoint(value_ + t); }
    CirclePoint operator-(double t) const { return CirclePoint(value_ - t); }
    friend bool operator==(CirclePoint, CirclePoint) = default;

private:
    double value_ = 0.0;
};

inline double circ_dist(CirclePoint a, CirclePoint b)
{
    double d = std::abs(a.value() - b.value());
    return std::min(d, 1.0 - d);
}

/// Open arc traversed counterclockwise from `start`. Length 1 is the full circle.
struct Arc {
    CirclePoint start;
    double length = 0.0;

    Arc() = default;
    Arc(CirclePoint s, double len) : start(s), length(len)
    {
        if (!(len > 0.0) || len > 1.0) throw std::invalid_argument("Arc: length must lie in (0,1]");
    }
    Arc(double s, double len) : Arc(CirclePoint(s), len) {}

    bool full() const { return length >= 1.0; }
    double end() const { return start.value() + length; } // lifted, may exceed 1

    bool contains(CirclePoint p) const
    {
        if (full()) return true;
        double d = wrap(p.value() - start.value());
        return d > 0.0 && d < length;
    }
};

/// Finite union of pairwise disjoint open arcs, sorted by start. Arcs that
/// touch are merged, so the shared endpoint is absorbed.
class ArcUnion {
public:
    ArcUnion() = default;

    static ArcUnion full_circle()
    {
        ArcUnion u;
        u.arcs_.emplace_back(0.0, 1.0);
        return u;
    }

    /// Normalizes an arbitrary list of arcs into canonical form.
    static ArcUnion normalize(const std::vector<Arc>& raw);

private:
    static ArcUnion merge_once(const std::vector<Arc>& raw);

public:

    /// Builds the union of lifted intervals [lo, hi) (hi - lo may exceed 1).
    static ArcUnion from_intervals(const std::vector<std::pair<double, double>>& iv)
    {
        std::vector<Arc> raw;
        raw.reserve(iv.size());
        for (auto [lo, hi] : iv) {
            double len = hi - lo;
            if (len <= 0.0) continue;
            raw.emplace_back(lo, std::min(len, 1.0));
        }
        return normalize(raw);
    }

    const std::vector<Arc>& arcs() const { return arcs_; }
    std::size_t components() const { return arcs_.size(); }
    bool empty() const { return arcs_.empty(); }
    bool is_full() const { return arcs_.size() == 1 && arcs_.front().full(); }

    double measure() const
    {
        double m = 0.0;
        for (const auto& a : arcs_) m += a.length;
        return std::min(m, 1.0);
    }

    bool contains(CirclePoint p) const
    {
        for (const auto& a : arcs_)
            if (a.contains(p)) return true;
        return false;
    }

    /// Complement as open arcs (endpoints are measure-zero and dropped).
    ArcUnion complement() const
    {
        if (arcs_.empty()) return full_circle();
        if (is_full()) return {};
        std::vector<Arc> raw;
        for (std::size_t i = 0; i < arcs_.size(); ++i) {
            const Arc& cur = arcs_[i];
            const Arc& next = arcs_[(i + 1) % arcs_.size()];
            double gap_start = cur.end();
            double gap = wrap(next.start.value() - gap_start);
            if (arcs_.size() == 1) gap = 1.0 - cur.length;
            if (gap > 0.0) raw.emplace_back(gap_start, gap);
        }
        return normalize(raw);
    }

    friend bool operator==(const ArcUnion& a, const ArcUnion& b)
    {
        if (a.arcs_.size() != b.arcs_.size()) return false;
        for (std::size_t i = 0; i < a.arcs_.size(); ++i)
            if (a.arcs_[i].start != b.arcs_[i].start || a.arcs_[i].length != b.arcs_[i].length) return false;
        return true;
    }

private:
    std::vector<Arc> arcs_;
};

inline ArcUnion ArcUnion::normalize(const std::vector<Arc>& raw)
{
    // start + length rounding can move an endpoint by an ulp; iterate to a fixed point
    ArcUnion u = merge_once(raw);
    for (int i = 0; i < 16; ++i) {
        ArcUnion v = merge_once(u.arcs_);
        if (v == u) break;
        u = std::move(v);
    }
    return u;
}

inline ArcUnion ArcUnion::merge_once(const std::vector<Arc>& raw)
{
    // Unroll onto [0,1) as half-open intervals, merge, then re-join across 0.
    std::vector<std::pair<double, double>> iv;
    iv.reserve(raw.size() * 2);
    for (const auto& a : raw) {
        if (a.full()) return full_circle();
        double s = a.start.value();
        double e = s + a.length;
        if (e <= 1.0) {
            iv.emplace_back(s, e);
        } else {
            iv.emplace_back(s, 1.0);
            iv.emplace_back(0.0, e - 1.0);
        }
    }
    if (iv.empty()) return {};
    std::sort(iv.begin(), iv.end());

    std::vector<std::pair<double, double>> merged;
    for (const auto& p : iv) {
        if (!merged.empty() && p.first <= merged.back().second)
            merged.back().second = std::max(merged.back().second, p.second);
        else
            merged.push_back(p);
    }

    ArcUnion u;
    if (merged.size() == 1 && merged[0].first <= 0.0 && merged[0].second >= 1.0) return full_circle();

    bool joins = merged.size() > 1 && merged.front().first <= 0.0 && merged.back().second >= 1.0;
    std::size_t first = joins ? 1 : 0;
    std::size_t last = joins ? merged.size() - 1 : merged.size();
    for (std::size_t i = first; i < last; ++i)
        u.arcs_.emplace_back(merged[i].first, merged[i].second - merged[i].first);
    if (joins) {
        double len = (1.0 - merged.back().first) + merged.front().second;
        if (len >= 1.0) return full_circle();
        u.arcs_.emplace_back(merged.back().first, len);
    }
    return u;
}

/// Signed distance from p to the complement of u: positive inside, negative
/// (minus the distance to u) outside, zero on the boundary. Capped at 1/2.
inline double margin_inside(const ArcUnion& u, CirclePoint p)
{
    if (u.empty()) return -0.5;
    if (u.is_full()) return 0.5;
    double best_out = 0.5;
    for (const auto& a : u.arcs()) {
        double d = wrap(p.value() - a.start.value());
        if (d > 0.0 && d < a.length) return std::min(std::min(d, a.length - d), 0.5);
        if (d == 0.0) return 0.0;
        // outside this arc: distance to nearest endpoint
        double to_end = d - a.length;
        double to_start = 1.0 - d;
        if (to_end == 0.0) return 0.0;
        best_out = std::min(best_out, std::min(to_end, to_start));
    }
    return -best_out;
}

inline void to_json(nlohmann::json& j, const ArcUnion& u)
{
    j = nlohmann::json::array();
    for (const auto& a : u.arcs()) j.push_back({{"start", a.start.value()}, {"length", a.length}});
}

inline void from_json(const nlohmann::json& j, ArcUnion& u)
{
    std::vector<Arc> raw;
    for (const auto& e : j) raw.emplace_back(e.at("start").get<double>(), e.at("length").get<double>());
    u = ArcUnion::normalize(raw);
}

} // namespace fibresync
