// Membership certification for the contracting-on-average map class: the
// contraction region G and constant C, escape-set counts s and measures eps,
// the derived constants l, eps', q, a numeric delta and the threshold b0.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fibresync/circle.hpp"
#include "fibresync/dynamics.hpp"
#include "fibresync/errors.hpp"
#include "fibresync/maps.hpp"
#include "fibresync/parallel.hpp"

namespace fibresync {

inline constexpr std::size_t min_certify_grid = 1000;
inline constexpr std::uint64_t b0_ceiling = std::uint64_t{1} << 60;

// ---------------------------------------------------------------------------
// contraction region

struct ContractionRegion {
    ArcUnion region;
    bool warning = false; // empty region (C at or below the slope floor, or nowhere contracting)
    std::string note;
    std::size_t grid_n = 0;
};

/// Inner approximation of {y : sup_x |d_y f(x, y)| < C}: the union of grid
/// cells on which the family's certified envelope stays below C.
inline ContractionRegion find_contraction_region(const FibreMapDescriptor& fm, double C, std::size_t grid_n)
{
    if (!(C > 0.0 && C < 1.0)) throw ValidationError("C must lie in (0, 1)");
    if (grid_n < min_certify_grid) throw ValidationError("contraction grid must have at least 1000 cells");
    ContractionRegion out;
    out.grid_n = grid_n;
    if (C <= fm.dy_floor) {
        out.warning = true;
        out.note = "C is at or below the slope floor of the family";
        return out;
    }
    std::vector<char> ok(grid_n, 0);
    const double n = static_cast<double>(grid_n);
    parallel_for(grid_n, [&](std::size_t k) {
        double lo = static_cast<double>(k) / n, hi = static_cast<double>(k + 1) / n;
        double env = fm.dy_envelope ? fm.dy_envelope(lo, hi) : fm.dy_bound;
        ok[k] = env < C ? 1 : 0;
    });
    std::vector<std::pair<double, double>> iv;
    for (std::size_t k = 0; k < grid_n;) {
        if (!ok[k]) {
            ++k;
            continue;
        }
        std::size_t j = k;
        while (j < grid_n && ok[j]) ++j;
        iv.emplace_back(static_cast<double>(k) / n, static_cast<double>(j) / n);
        k = j;
    }
    out.region = ArcUnion::from_intervals(iv);
    if (out.region.empty()) {
        out.warning = true;
        out.note = "no grid cell certified below C";
    }
    return out;
}

// ---------------------------------------------------------------------------
// escape sets

struct SublevelReport {
    ArcUnion set;
    std::size_t components = 0;
    double measure = 0.0;
    bool certified = true;

    double longest_component() const
    {
        double m = 0.0;
        for (const auto& a : set.arcs()) m = std::max(m, a.length);
        return m;
    }
};

inline void to_json(nlohmann::json& j, const SublevelReport& r)
{
    j = {{"set", r.set}, {"components", r.components}, {"measure", r.measure}, {"certified", r.certified}};
}

struct EscapeCount {
    std::size_t components = 0;
    double measure = 0.0;
};

/// Outer approximation of {x : f(x, y) not in G for some y in [yl, yh]} on a
/// fixed x-grid. Each x-cell is kept unless the enclosure of f over
/// cell x [yl, yh] lies inside G. Separable maps are handled by binary search
/// over the monotone runs of the x-part, which makes large grids cheap.
class EscapeScanner {
public:
    using Ranges = std::vector<std::pair<std::size_t, std::size_t>>; // half-open cell ranges

    EscapeScanner(FibreMapDescriptor fm, ArcUnion G, std::size_t x_grid_n)
        : fm_(std::move(fm)), G_(std::move(G)), bad_(G_.complement()), nx_(x_grid_n)
    {
        if (nx_ < min_certify_grid) throw ValidationError("x grid must have at least 1000 cells");
        if (!fm_.enclosure) {
            // Lipschitz fallback around the cell midpoint
            auto f = fm_.eval;
            double rx = fm_.dx_bound, ry = fm_.dy_bound;
            fm_.enclosure = [f, rx, ry](double xl, double xh, double yl, double yh) {
                double v = f(0.5 * (xl + xh), 0.5 * (yl + yh));
                double r = 0.5 * rx * (xh - xl) + 0.5 * ry * (yh - yl);
                return Interval{v - r, v + r};
            };
        }
        if (fm_.separable()) build_runs();
    }

    std::size_t grid() const { return nx_; }
    const ArcUnion& target() const { return G_; }
    bool separable() const { return !runs_.empty(); }

    double cell_lo(std::size_t i) const { return static_cast<double>(i) / static_cast<double>(nx_); }
    double cell_hi(std::size_t i) const { return static_cast<double>(i + 1) / static_cast<double>(nx_); }

    /// Escaping cells for the lifted fibre interval [yl, yh].
    Ranges cells(double yl, double yh) const
    {
        if (bad_.empty()) return {};
        return separable() ? cells_separable(yl, yh) : cells_generic(yl, yh);
    }

    EscapeCount count(const Ranges& r) const
    {
        EscapeCount c;
        std::size_t total = 0;
        for (auto [a, b] : r) total += b - a;
        c.measure = static_cast<double>(total) / static_cast<double>(nx_);
        c.components = r.size();
        if (r.size() > 1 && r.front().first == 0 && r.back().second == nx_) --c.components;
        return c;
    }

    SublevelReport report(double yl, double yh) const
    {
        Ranges r = cells(yl, yh);
        std::vector<std::pair<double, double>> iv;
        iv.reserve(r.size());
        for (auto [a, b] : r) iv.emplace_back(cell_lo(a), b == nx_ ? 1.0 : cell_lo(b));
        SublevelReport rep;
        rep.set = ArcUnion::from_intervals(iv);
        rep.components = rep.set.components();
        rep.measure = rep.set.measure();
        return rep;
    }

private:
    struct Run {
        std::size_t begin, end;
        bool increasing;
    };

    void build_runs()
    {
        gx_.resize(nx_);
        for (std::size_t i = 0; i < nx_; ++i) gx_[i] = fm_.x_part(cell_lo(i), cell_hi(i));
        gmin_ = gx_[0].lo;
        gmax_ = gx_[0].hi;
        for (const auto& g : gx_) {
            gmin_ = std::min(gmin_, g.lo);
            gmax_ = std::max(gmax_, g.hi);
        }
        for (std::size_t i = 0; i < nx_;) {
            std::size_t j = i + 1;
            int dir = 0;
            while (j < nx_) {
                bool up = gx_[j].lo >= gx_[j - 1].lo && gx_[j].hi >= gx_[j - 1].hi;
                bool down = gx_[j].lo <= gx_[j - 1].lo && gx_[j].hi <= gx_[j - 1].hi;
                if (dir == 0) {
                    if (up) dir = 1;
                    else if (down) dir = -1;
                    else break;
                } else if ((dir > 0 && !up) || (dir < 0 && !down)) {
                    break;
                }
                ++j;
            }
            runs_.push_back({i, j, dir >= 0});
            i = j;
        }
    }

    // first index in [lo, hi) where pred fails; pred must be true-then-false
    template <typename Pred>
    static std::size_t partition_index(std::size_t lo, std::size_t hi, Pred pred)
    {
        while (lo < hi) {
            std::size_t mid = lo + (hi - lo) / 2;
            if (pred(mid)) lo = mid + 1;
            else hi = mid;
        }
        return lo;
    }

    Ranges cells_separable(double yl, double yh) const
    {
        Interval h = fm_.y_part(yl, yh);
        if (h.width() >= 1.0) return {{0, nx_}};
        Ranges out;
        for (const auto& arc : bad_.arcs()) {
            const double s = arc.start.value(), e = s + arc.length;
            const double kmin = std::floor(gmin_ + h.lo - e) - 1.0;
            const double kmax = std::ceil(gmax_ + h.hi - s) + 1.0;
            for (double k = kmin; k <= kmax; k += 1.0) {
                // cells whose range [gl + h.lo, gh + h.hi] meets [s + k, e + k]
                const double alpha = s + k - h.hi, beta = e + k - h.lo;
                if (beta < gmin_ || alpha > gmax_) continue;
                for (const auto& run : runs_) {
                    std::size_t first, last;
                    if (run.increasing) {
                        first = partition_index(run.begin, run.end, [&](std::size_t i) { return gx_[i].hi < alpha; });
                        last = partition_index(run.begin, run.end, [&](std::size_t i) { return gx_[i].lo <= beta; });
                    } else {
                        first = partition_index(run.begin, run.end, [&](std::size_t i) { return gx_[i].lo > beta; });
                        last = partition_index(run.begin, run.end, [&](std::size_t i) { return gx_[i].hi >= alpha; });
                    }
                    if (first < last) out.emplace_back(first, last);
                }
            }
        }
        return merge(std::move(out));
    }

    Ranges cells_generic(double yl, double yh) const
    {
        Ranges out;
        for (std::size_t i = 0; i < nx_; ++i) {
            Interval r = fm_.enclosure(cell_lo(i), cell_hi(i), yl, yh);
            bool escapes = r.width() >= 1.0 || margin_inside(G_, CirclePoint(r.mid())) <= 0.5 * r.width();
            if (!escapes) continue;
            if (!out.empty() && out.back().second == i) out.back().second = i + 1;
            else out.emplace_back(i, i + 1);
        }
        return out;
    }

    static Ranges merge(Ranges r)
    {
        if (r.empty()) return r;
        std::sort(r.begin(), r.end());
        Ranges m;
        for (const auto& p : r) {
            if (!m.empty() && p.first <= m.back().second) m.back().second = std::max(m.back().second, p.second);
            else m.push_back(p);
        }
        return m;
    }

    FibreMapDescriptor fm_;
    ArcUnion G_;
    ArcUnion bad_;
    std::size_t nx_;
    std::vector<Interval> gx_;
    std::vector<Run> runs_;
    double gmin_ = 0.0, gmax_ = 0.0;
};

/// Outer approximation of {x : f_x(y) not in G}.
inline SublevelReport escape_set(const FibreMapDescriptor& fm, const ArcUnion& G, CirclePoint y, std::size_t grid_n)
{
    EscapeScanner sc(fm, G, grid_n);
    return sc.report(y.value(), y.value());
}

/// Fibre cells for sweeps over y: a uniform grid, with cells split until the
/// image of each has width at most 1 / y_grid_n.
inline std::vector<std::pair<double, double>> adaptive_fibre_cells(const FibreMapDescriptor& fm, std::size_t y_grid_n)
{
    if (y_grid_n < min_certify_grid) throw ValidationError("y grid must have at least 1000 cells");
    const double target = 1.0 / static_cast<double>(y_grid_n);
    std::vector<std::pair<double, double>> cells;
    std::vector<std::pair<double, int>> stack; // (lo, level); width = 2^-level / n
    for (std::size_t k = y_grid_n; k-- > 0;) stack.emplace_back(static_cast<double>(k) * target, 0);
    while (!stack.empty()) {
        auto [lo, level] = stack.back();
        stack.pop_back();
        double w = std::ldexp(target, -level);
        double hi = lo + w;
        double env = fm.dy_envelope ? fm.dy_envelope(lo, hi) : fm.dy_bound;
        if (level >= 40 || env * w <= target) {
            cells.emplace_back(lo, hi);
        } else {
            stack.emplace_back(lo + 0.5 * w, level + 1);
            stack.emplace_back(lo, level + 1);
        }
    }
    return cells;
}

struct FibreSweep {
    std::size_t s = 0;       // max components over fibre cells
    double eps = 0.0;        // max measure over fibre cells
    double worst_y_s = 0.0;  // fibre cell attaining s
    double worst_y_eps = 0.0;
    double delta = 0.0;
    std::size_t y_cells = 0;
    std::size_t x_grid_n = 0;
    std::vector<EscapeCount> per_cell;
};

/// Worst escape-set shape over all fibre points, each fibre cell fattened by delta.
inline FibreSweep sweep_fibre(const EscapeScanner& sc, const std::vector<std::pair<double, double>>& cells,
                              double delta = 0.0)
{
    FibreSweep out;
    out.delta = delta;
    out.y_cells = cells.size();
    out.x_grid_n = sc.grid();
    out.per_cell.resize(cells.size());
    parallel_for(cells.size(), [&](std::size_t i) {
        out.per_cell[i] = sc.count(sc.cells(cells[i].first - delta, cells[i].second + delta));
    });
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& c = out.per_cell[i];
        if (c.components > out.s) {
            out.s = c.components;
            out.worst_y_s = cells[i].first;
        }
        if (c.measure > out.eps) {
            out.eps = c.measure;
            out.worst_y_eps = cells[i].first;
        }
    }
    return out;
}

inline FibreSweep sup_escape_over_fibre(const FibreMapDescriptor& fm, const ArcUnion& G, std::size_t y_grid_n,
                                        std::size_t x_grid_n)
{
    EscapeScanner sc(fm, G, x_grid_n);
    return sweep_fibre(sc, adaptive_fibre_cells(fm, y_grid_n));
}

// ---------------------------------------------------------------------------
// closed-form constants

/// eps < log(1/C) / (6 log(R/C)).
inline bool check_epsilon_bound(double R, double C, double eps)
{
    if (!(R >= 1.0) || !(C > 0.0 && C < 1.0)) throw ValidationError("need R >= 1 and 0 < C < 1");
    return eps < std::log(1.0 / C) / (6.0 * std::log(R / C));
}

/// l = log R / log(1/C), so that R C^l = 1.
inline double compute_l(double R, double C)
{
    if (!(R >= 1.0) || !(C > 0.0 && C < 1.0)) throw ValidationError("need R >= 1 and 0 < C < 1");
    double l = std::log(R) / std::log(1.0 / C);
    if (!(R * std::pow(C, l) <= 1.0 + 1e-12)) throw NumericalError("R C^l exceeds 1");
    return l;
}

/// 1 / (6 (l + 1)): the ceiling for eps and eps'.
inline double epsilon_ceiling(double l) { return 1.0 / (6.0 * (l + 1.0)); }

inline std::uint64_t compute_q(std::uint64_t s, double eps_prime, std::uint64_t b)
{
    long double f = std::floor(static_cast<long double>(eps_prime) * static_cast<long double>(b));
    return 2 * (s + 1) + static_cast<std::uint64_t>(f);
}

/// floor(b / (4 (l + 1))).
inline std::uint64_t bad_children_cap(double l, std::uint64_t b)
{
    return static_cast<std::uint64_t>(std::floor(static_cast<long double>(b) / (4.0L * (static_cast<long double>(l) + 1.0L))));
}

/// sum_{i=1}^n (R/b)^i; n = 0 means the full series R / (b - R).
inline double phi_lipschitz_bound(std::size_t n, double R, double b)
{
    if (n == 0) {
        if (!(b > R)) throw ValidationError("limit bound needs b > R");
        return R / (b - R);
    }
    double r = R / b, term = 1.0, sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        term *= r;
        sum += term;
    }
    return sum;
}

inline double default_eps_prime(double eps, double l)
{
    double top = epsilon_ceiling(l);
    if (!(eps < top)) throw CertificationError("eps is not below 1/(6(l+1)); no admissible eps'");
    if (eps <= 0.0) return 0.5 * top;
    return std::sqrt(eps * top);
}

struct B0Inputs {
    double R = 1.0;
    double delta = 0.0;
    double l = 0.0;
    std::uint64_t s = 1;
    double eps_prime = 0.0;
};

inline bool b0_geometric_ok(const B0Inputs& in, std::uint64_t b)
{
    long double bb = static_cast<long double>(b), R = in.R;
    return bb > R && R / (bb - R) < static_cast<long double>(in.delta);
}

inline bool b0_counting_ok(const B0Inputs& in, std::uint64_t b)
{
    return compute_q(in.s, in.eps_prime, b) < bad_children_cap(in.l, b);
}

/// Smallest integer b > max(2, R) with R/(b - R) < delta and q(b) < floor(b/(4(l+1))).
inline std::uint64_t compute_b0(const B0Inputs& in)
{
    if (!(in.R >= 1.0) || !std::isfinite(in.R)) throw ValidationError("compute_b0: need finite R >= 1");
    if (!(in.delta > 0.0)) throw ValidationError("compute_b0: need delta > 0");
    if (!(in.l >= 0.0)) throw ValidationError("compute_b0: need l >= 0");
    if (in.s < 1) throw ValidationError("compute_b0: need s >= 1");
    if (!(in.eps_prime > 0.0 && in.eps_prime < 1.0)) throw ValidationError("compute_b0: need 0 < eps' < 1");

    const long double inv = 1.0L / (4.0L * (static_cast<long double>(in.l) + 1.0L)) - in.eps_prime;
    if (!(inv > 0.0L)) throw NumericalError("compute_b0: eps' >= 1/(4(l+1)), counting inequality unsatisfiable");

    // necessary lower bounds, loosened by a couple of units against rounding
    long double lo = std::floor(std::max<long double>(2.0L, in.R)) + 1.0L;
    lo = std::max(lo, std::floor(in.R + in.R / static_cast<long double>(in.delta)) - 2.0L);
    lo = std::max(lo, std::floor((2.0L * in.s + 1.0L) / inv) - 2.0L);
    if (!(lo <= static_cast<long double>(b0_ceiling)))
        throw NumericalError("compute_b0: no admissible b below 2^60 (delta too small or eps' too large)");
    std::uint64_t b = static_cast<std::uint64_t>(lo);
    const long double floor_b = std::max<long double>(2.0L, in.R);
    while (static_cast<long double>(b) <= floor_b) ++b;
    for (; b <= b0_ceiling; ++b)
        if (b0_geometric_ok(in, b) && b0_counting_ok(in, b)) return b;
    throw NumericalError("compute_b0: no admissible b below 2^60");
}

// ---------------------------------------------------------------------------
// delta

struct DeltaEstimate {
    double delta = 0.0;
    int rung = 0; // delta = 2^-rung
    std::vector<std::pair<double, bool>> tried;
    nlohmann::json diagnostics;
};

/// Largest delta on the ladder 2^-1, 2^-2, ... for which every fibre cell,
/// fattened by delta, has an escape set with at most s components and
/// measure at most eps'.
inline DeltaEstimate estimate_delta(const EscapeScanner& sc, const std::vector<std::pair<double, double>>& cells,
                                    std::size_t s, double eps_prime, const std::vector<EscapeCount>& baseline,
                                    int max_rung = 40)
{
    // check the worst fibre cells first so failing rungs exit early
    std::vector<std::size_t> order(cells.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (baseline.size() == cells.size())
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return baseline[a].measure > baseline[b].measure; });

    DeltaEstimate out;
    for (int k = 1; k <= max_rung; ++k) {
        const double delta = std::ldexp(1.0, -k);
        std::atomic<bool> failed{false};
        parallel_for(order.size(), [&](std::size_t i) {
            if (failed.load(std::memory_order_relaxed)) return;
            const auto& c = cells[order[i]];
            EscapeCount e = sc.count(sc.cells(c.first - delta, c.second + delta));
            if (e.components > s || e.measure > eps_prime) failed.store(true, std::memory_order_relaxed);
        });
        out.tried.emplace_back(delta, !failed.load());
        if (!failed.load()) {
            out.delta = delta;
            out.rung = k;
            return out;
        }
    }
    // full report at the smallest rung
    FibreSweep worst = sweep_fibre(sc, cells, std::ldexp(1.0, -max_rung));
    out.diagnostics = {{"smallest_delta", std::ldexp(1.0, -max_rung)},
                       {"s_at_smallest", worst.s},
                       {"eps_at_smallest", worst.eps},
                       {"worst_y_s", worst.worst_y_s},
                       {"worst_y_eps", worst.worst_y_eps}};
    throw CertificationError("no delta on the ladder passes: " + out.diagnostics.dump());
}

// ---------------------------------------------------------------------------
// counting lemma

struct CountingCheck {
    std::size_t N = 0;
    std::size_t m = 0;     // indices with y_j outside G
    bool hypothesis = false; // m < N / (2 (l + 1))
    bool bound_held = true;  // sum log|d_y f| < (N/2) log C, meaningful when hypothesis
    double log_product = 0.0;
    double log_bound = 0.0;
};

inline CountingCheck counting_bound_check(const OrbitRecord& orbit, double C, double l)
{
    if (orbit.in_G.size() != orbit.log_dy.size()) throw ValidationError("counting check needs in_G flags for every step");
    CountingCheck c;
    c.N = orbit.log_dy.size();
    for (bool in : orbit.in_G) c.m += in ? 0 : 1;
    c.log_product = std::accumulate(orbit.log_dy.begin(), orbit.log_dy.end(), 0.0);
    c.log_bound = 0.5 * static_cast<double>(c.N) * std::log(C);
    c.hypothesis = static_cast<double>(c.m) < static_cast<double>(c.N) / (2.0 * (l + 1.0));
    if (c.hypothesis) c.bound_held = c.log_product < c.log_bound;
    return c;
}

// ---------------------------------------------------------------------------
// certificate

struct CertifyOptions {
    double C = 0.2;
    std::size_t contraction_grid = 100000;
    std::size_t y_grid = 10000;
    std::size_t x_grid = 100000;
    std::optional<double> eps_prime;
    int max_delta_rung = 40;
};

inline void to_json(nlohmann::json& j, const CertifyOptions& o)
{
    j = {{"C", o.C},
         {"contraction_grid", o.contraction_grid},
         {"y_grid", o.y_grid},
         {"x_grid", o.x_grid},
         {"max_delta_rung", o.max_delta_rung}};
    if (o.eps_prime) j["eps_prime"] = *o.eps_prime;
}

struct ClassCertificate {
    std::string family;
    nlohmann::json params;
    ArcUnion G;
    double C = 0.0;
    std::uint64_t s = 1;
    double eps = 0.0;
    double eps_prime = 0.0;
    double R = 1.0;
    double l = 0.0;
    double delta = 0.0;
    std::uint64_t b0 = 0;
    bool certified = false;
    std::string failure; // first failed stage, empty when certified
    nlohmann::json grids;

    double eps_ceiling() const { return epsilon_ceiling(l); }
    std::uint64_t q_of_b(std::uint64_t b) const { return compute_q(s, eps_prime, b); }
    B0Inputs b0_inputs() const { return {R, delta, l, s, eps_prime}; }

    /// Inequalities a certificate must satisfy; empty when sound.
    std::vector<std::string> validate() const
    {
        std::vector<std::string> bad;
        if (!(C > 0.0 && C < 1.0)) bad.push_back("C outside (0,1)");
        if (!(R >= 1.0)) bad.push_back("R < 1");
        if (bad.empty() && !(R * std::pow(C, l) <= 1.0 + 1e-12)) bad.push_back("R C^l > 1");
        if (!(eps < eps_prime)) bad.push_back("eps >= eps'");
        if (!(eps_prime < eps_ceiling())) bad.push_back("eps' >= 1/(6(l+1))");
        if (s < 1) bad.push_back("s < 1");
        if (!(delta > 0.0)) bad.push_back("delta <= 0");
        if (G.empty()) bad.push_back("G empty");
        if (bad.empty()) {
            auto in = b0_inputs();
            if (!b0_geometric_ok(in, b0)) bad.push_back("R/(b0-R) >= delta");
            if (!b0_counting_ok(in, b0)) bad.push_back("q(b0) >= floor(b0/(4(l+1)))");
            std::uint64_t prev = b0 - 1;
            if (static_cast<double>(prev) > std::max(2.0, R) && b0_geometric_ok(in, prev) && b0_counting_ok(in, prev))
                bad.push_back("b0 - 1 already admissible");
        }
        return bad;
    }
};

inline void to_json(nlohmann::json& j, const ClassCertificate& c)
{
    j = {{"family", c.family},
         {"params", c.params},
         {"G", c.G},
         {"C", c.C},
         {"s", c.s},
         {"eps", c.eps},
         {"eps_prime", c.eps_prime},
         {"eps_ceiling", c.eps_ceiling()},
         {"R", c.R},
         {"l", c.l},
         {"delta", c.delta},
         {"q_of_b", {{"formula", "2*(s+1)+floor(eps_prime*b)"}, {"at_b0", c.b0 ? c.q_of_b(c.b0) : 0}}},
         {"bad_children_cap_at_b0", c.b0 ? bad_children_cap(c.l, c.b0) : 0},
         {"b0", c.b0},
         {"certified", c.certified},
         {"failure", c.failure},
         {"grids", c.grids}};
}

inline void from_json(const nlohmann::json& j, ClassCertificate& c)
{
    c.family = j.at("family").get<std::string>();
    c.params = j.value("params", nlohmann::json::object());
    c.G = j.at("G").get<ArcUnion>();
    c.C = j.at("C").get<double>();
    c.s = j.at("s").get<std::uint64_t>();
    c.eps = j.at("eps").get<double>();
    c.eps_prime = j.at("eps_prime").get<double>();
    c.R = j.at("R").get<double>();
    c.l = j.at("l").get<double>();
    c.delta = j.at("delta").get<double>();
    c.b0 = j.at("b0").get<std::uint64_t>();
    c.certified = j.at("certified").get<bool>();
    c.failure = j.value("failure", "");
    c.grids = j.value("grids", nlohmann::json::object());
}

/// Full pipeline. Never throws on a failed condition: the certificate comes
/// back with certified = false and `failure` naming the first failed stage.
inline ClassCertificate certify(const SkewProduct& m, const CertifyOptions& opt)
{
    const FibreMapDescriptor& fm = m.fibre;
    ClassCertificate cert;
    cert.family = fm.family;
    cert.params = fm.params;
    cert.C = opt.C;
    cert.R = fm.r_bound;
    cert.grids = opt;

    ContractionRegion cr = find_contraction_region(fm, opt.C, opt.contraction_grid);
    cert.G = cr.region;
    if (cr.warning) {
        cert.failure = "condition (a): empty contraction region (" + cr.note + ")";
        return cert;
    }
    cert.l = compute_l(cert.R, cert.C);

    EscapeScanner sc(fm, cert.G, opt.x_grid);
    auto cells = adaptive_fibre_cells(fm, opt.y_grid);
    FibreSweep sw = sweep_fibre(sc, cells);
    cert.grids["y_cells"] = sw.y_cells;
    cert.grids["worst_y_eps"] = sw.worst_y_eps;
    cert.grids["worst_y_s"] = sw.worst_y_s;
    cert.s = std::max<std::uint64_t>(1, sw.s);
    cert.eps = sw.eps;
    if (!check_epsilon_bound(cert.R, cert.C, cert.eps)) {
        cert.failure = "condition (b): eps is not below log(1/C)/(6 log(R/C))";
        return cert;
    }
    cert.eps_prime = opt.eps_prime ? *opt.eps_prime : default_eps_prime(cert.eps, cert.l);
    if (!(cert.eps < cert.eps_prime && cert.eps_prime < cert.eps_ceiling())) {
        cert.failure = "eps' outside (eps, 1/(6(l+1)))";
        return cert;
    }
    try {
        DeltaEstimate d = estimate_delta(sc, cells, cert.s, cert.eps_prime, sw.per_cell, opt.max_delta_rung);
        cert.delta = d.delta;
        cert.grids["delta_rung"] = d.rung;
    } catch (const CertificationError& e) {
        cert.failure = std::string("delta: ") + e.what();
        return cert;
    }
    cert.b0 = compute_b0(cert.b0_inputs());
    cert.certified = cert.validate().empty();
    if (!cert.certified) cert.failure = "certificate failed re-validation";
    return cert;
}

// ---------------------------------------------------------------------------
// sublevel exponent for the Schrodinger family

struct ExponentFit {
    std::vector<double> lambdas;
    std::vector<double> longest; // longest escape component over sampled u
    std::vector<std::size_t> max_components;
    double beta = 0.0;           // longest ~ lambda^(-beta/2)
    double log_prefactor = 0.0;
    bool certified = false;      // u is sampled, not swept
};

inline ExponentFit fit_sublevel_exponent(const std::vector<double>& lambdas, double energy, int b,
                                         std::size_t u_samples, std::size_t x_grid_n)
{
    if (lambdas.size() < 2) throw ValidationError("exponent fit needs at least two lambdas");
    ExponentFit fit;
    fit.lambdas = lambdas;
    for (double lam : lambdas) {
        SchrodingerParams p(lam, energy, Potential::cos2pi(), b);
        SkewProduct m = schrodinger_projective(p);
        EscapeScanner sc(m.fibre, schrodinger_target_region(lam), x_grid_n);
        std::vector<double> len(u_samples);
        std::vector<std::size_t> comp(u_samples);
        parallel_for(u_samples, [&](std::size_t i) {
            double u = (static_cast<double>(i) + 0.5) / static_cast<double>(u_samples);
            SublevelReport r = sc.report(u, u);
            len[i] = r.longest_component();
            comp[i] = r.components;
        });
        fit.longest.push_back(*std::max_element(len.begin(), len.end()));
        fit.max_components.push_back(*std::max_element(comp.begin(), comp.end()));
    }
    // least squares on log(longest) = c - (beta/2) log(lambda)
    double sx = 0, sy = 0, sxx = 0, sxy = 0, n = static_cast<double>(lambdas.size());
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        double x = std::log(lambdas[i]), y = std::log(fit.longest[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    fit.beta = -2.0 * slope;
    fit.log_prefactor = (sy - slope * sx) / n;
    return fit;
}

} // namespace fibresync
