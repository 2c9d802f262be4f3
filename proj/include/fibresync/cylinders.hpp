// Base-b cylinders, inverse branches, admissible curves phi_w and the
// good/bad bookkeeping over the partitions P_n.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <nlohmann/json.hpp>

#include "fibresync/base_trajectory.hpp"
#include "fibresync/certify.hpp"
#include "fibresync/circle.hpp"
#include "fibresync/errors.hpp"
#include "fibresync/maps.hpp"
#include "fibresync/parallel.hpp"

namespace fibresync {

/// Digits j_1 ... j_n, each in 1..b.
class CylinderWord {
public:
    CylinderWord(int b, std::vector<int> digits) : b_(b), digits_(std::move(digits))
    {
        if (b < 2) throw ValidationError("b must be an integer >= 2");
        if (digits_.empty()) throw ValidationError("cylinder word must have at least one digit");
        for (int j : digits_)
            if (j < 1 || j > b) throw ValidationError("cylinder digit out of 1..b");
    }

    /// Word number `index` (0-based, lexicographic) among the b^n words of length n.
    static CylinderWord from_index(int b, std::size_t n, std::uint64_t index)
    {
        std::vector<int> d(n);
        for (std::size_t i = n; i-- > 0;) {
            d[i] = static_cast<int>(index % static_cast<std::uint64_t>(b)) + 1;
            index /= static_cast<std::uint64_t>(b);
        }
        return CylinderWord(b, std::move(d));
    }

    int base() const { return b_; }
    std::size_t depth() const { return digits_.size(); }
    const std::vector<int>& digits() const { return digits_; }

    CylinderWord child(int j) const
    {
        auto d = digits_;
        d.push_back(j);
        return CylinderWord(b_, std::move(d));
    }

    std::string str() const
    {
        std::string s;
        for (std::size_t i = 0; i < digits_.size(); ++i) {
            if (i) s += '.';
            s += std::to_string(digits_[i]);
        }
        return s;
    }

    friend bool operator==(const CylinderWord&, const CylinderWord&) = default;

private:
    int b_;
    std::vector<int> digits_;
};

struct CylinderInterval {
    double left = 0.0;
    double width = 0.0;
};

/// [sum (j_i - 1) b^-i, + b^-n).
inline CylinderInterval cylinder_interval(const CylinderWord& w)
{
    long double left = 0.0L, scale = 1.0L;
    for (int j : w.digits()) {
        scale /= w.base();
        left += (j - 1) * scale;
    }
    return {static_cast<double>(left), static_cast<double>(scale)};
}

/// Exact form: left = num / den, width = 1 / den with den = b^n. Valid while
/// b^n fits in 64 bits.
struct ExactCylinder {
    std::uint64_t num = 0;
    std::uint64_t den = 1;
};

inline ExactCylinder cylinder_interval_exact(const CylinderWord& w)
{
    ExactCylinder e;
    const auto b = static_cast<std::uint64_t>(w.base());
    for (int j : w.digits()) {
        if (e.den > std::numeric_limits<std::uint64_t>::max() / b) throw ValidationError("b^n overflows 64 bits");
        e.num = e.num * b + static_cast<std::uint64_t>(j - 1);
        e.den *= b;
    }
    return e;
}

/// (x + j - 1) / b, the branch of T^-1 landing in I_j.
inline double inverse_branch(int j, double x, int b)
{
    if (j < 1 || j > b) throw ValidationError("inverse branch index out of 1..b");
    return (x + static_cast<double>(j - 1)) / static_cast<double>(b);
}

inline CirclePoint inverse_branch(int j, CirclePoint x, int b) { return CirclePoint(inverse_branch(j, x.value(), b)); }

/// phi_w(x) for x in [0, 1]. x = 1 gives the left limit at 0, which differs
/// from phi_w(0) in general.
inline double phi_eval(const SkewProduct& m, double y0, const CylinderWord& w, double x)
{
    if (w.base() != m.b) throw ValidationError("word base differs from map base");
    const auto& d = w.digits();
    const std::size_t n = d.size();
    // z_n = x, z_{i-1} = T_{j_i}^{-1} z_i; then y <- f(z_{i-1}, y) for i = 1..n
    double z[64];
    std::vector<double> zs;
    double* zp = z;
    if (n + 1 > 64) {
        zs.resize(n + 1);
        zp = zs.data();
    }
    zp[n] = x;
    for (std::size_t i = n; i >= 1; --i) zp[i - 1] = (zp[i] + static_cast<double>(d[i - 1] - 1)) / static_cast<double>(m.b);
    double y = y0;
    for (std::size_t i = 1; i <= n; ++i) y = m.fibre.eval(zp[i - 1], y);
    return y;
}

inline CirclePoint phi_eval(const SkewProduct& m, CirclePoint y0, const CylinderWord& w, CirclePoint x)
{
    return CirclePoint(phi_eval(m, y0.value(), w, x.value()));
}

enum class Badness { good, bad, unknown };

inline const char* to_string(Badness b)
{
    switch (b) {
    case Badness::good: return "good";
    case Badness::bad: return "bad";
    case Badness::unknown: return "unknown";
    }
    return "?";
}

struct BadnessVerdict {
    Badness status = Badness::unknown;
    double margin = 0.0;            // certified lower bound on the margin into G (good), or worst sample margin
    std::optional<double> witness;  // x with phi_w(x) outside G (bad)
};

/// Samples phi_w at k / grid_n, k = 0..grid_n (k = grid_n is the left limit at
/// 0). A cell between consecutive samples with margins m_a, m_b is certified
/// when m_a + m_b > Lip * h; good needs every cell certified, bad needs one
/// sample outside G. Sample sets nest under integer refinement of grid_n, so
/// refinement can only resolve unknown verdicts.
inline BadnessVerdict classify_cylinder(const SkewProduct& m, double y0, const CylinderWord& w, const ArcUnion& G,
                                        std::size_t grid_n)
{
    if (grid_n < 16) throw ValidationError("classify grid must have at least 16 cells");
    const double lip = phi_lipschitz_bound(w.depth(), m.fibre.r_bound, static_cast<double>(m.b));
    const double h = 1.0 / static_cast<double>(grid_n);
    BadnessVerdict v;
    double worst_sample = std::numeric_limits<double>::infinity();
    double worst_cell = std::numeric_limits<double>::infinity();
    double prev = 0.0;
    for (std::size_t k = 0; k <= grid_n; ++k) {
        double x = k == grid_n ? 1.0 : static_cast<double>(k) * h;
        double mg = margin_inside(G, CirclePoint(phi_eval(m, y0, w, x)));
        if (mg < worst_sample) {
            worst_sample = mg;
            if (mg <= 0.0) v.witness = x;
        }
        if (k > 0) worst_cell = std::min(worst_cell, 0.5 * (prev + mg - lip * h));
        prev = mg;
    }
    if (worst_sample <= 0.0) {
        v.status = Badness::bad;
        v.margin = worst_sample;
    } else if (worst_cell > 0.0) {
        v.status = Badness::good;
        v.margin = worst_cell;
        v.witness.reset();
    } else {
        v.status = Badness::unknown;
        v.margin = worst_cell;
        v.witness.reset();
    }
    return v;
}

// ---------------------------------------------------------------------------
// audits

struct ChildAudit {
    std::size_t bad = 0;
    std::size_t unknown = 0;
    std::size_t good = 0;
    std::uint64_t q = 0;
    std::uint64_t cap = 0;   // floor(b / (4(l+1)))
    bool below_b0 = false;   // b < b0: counts reported, lemma not asserted
    bool within_q() const { return bad + unknown <= q; }
};

/// Classifies the b children of w (w empty: the first-level cylinders).
inline ChildAudit audit_children(const SkewProduct& m, double y0, const std::vector<int>& parent, const ArcUnion& G,
                                 const ClassCertificate& cert, std::size_t grid_n,
                                 std::vector<BadnessVerdict>* verdicts = nullptr)
{
    ChildAudit a;
    const auto b = static_cast<std::uint64_t>(m.b);
    a.q = cert.q_of_b(b);
    a.cap = bad_children_cap(cert.l, b);
    a.below_b0 = b < cert.b0;
    std::vector<int> d = parent;
    d.push_back(1);
    for (int j = 1; j <= m.b; ++j) {
        d.back() = j;
        BadnessVerdict v = classify_cylinder(m, y0, CylinderWord(m.b, d), G, grid_n);
        switch (v.status) {
        case Badness::good: ++a.good; break;
        case Badness::bad: ++a.bad; break;
        case Badness::unknown: ++a.unknown; break;
        }
        if (verdicts) verdicts->push_back(v);
    }
    return a;
}

struct AuditReport {
    std::size_t depth = 0;             // children depth reached (complete levels)
    std::size_t target_depth = 0;
    std::uint64_t parents_audited = 0;
    std::size_t max_bad_children = 0;
    std::size_t max_flagged_children = 0; // max over parents of bad + unknown
    std::uint64_t unknown_children = 0;   // total
    std::uint64_t classifications = 0;
    std::uint64_t q = 0;
    std::uint64_t cap = 0;
    bool below_b0 = false;
    bool complete = false;
    std::vector<std::string> violations; // parents with bad + unknown > q
    // resume point: next parent level and index within it
    std::size_t next_level = 0;
    std::uint64_t next_index = 0;
};

inline void to_json(nlohmann::json& j, const AuditReport& r)
{
    j = {{"depth", r.depth},
         {"target_depth", r.target_depth},
         {"parents_audited", r.parents_audited},
         {"max_bad_children", r.max_bad_children},
         {"max_flagged_children", r.max_flagged_children},
         {"unknown_children", r.unknown_children},
         {"classifications", r.classifications},
         {"q", r.q},
         {"cap", r.cap},
         {"below_b0", r.below_b0},
         {"complete", r.complete},
         {"violations", r.violations},
         {"checkpoint", {{"next_level", r.next_level}, {"next_index", r.next_index}}}};
}

inline void from_json(const nlohmann::json& j, AuditReport& r)
{
    r.depth = j.at("depth").get<std::size_t>();
    r.target_depth = j.at("target_depth").get<std::size_t>();
    r.parents_audited = j.at("parents_audited").get<std::uint64_t>();
    r.max_bad_children = j.at("max_bad_children").get<std::size_t>();
    r.max_flagged_children = j.at("max_flagged_children").get<std::size_t>();
    r.unknown_children = j.at("unknown_children").get<std::uint64_t>();
    r.classifications = j.at("classifications").get<std::uint64_t>();
    r.q = j.at("q").get<std::uint64_t>();
    r.cap = j.at("cap").get<std::uint64_t>();
    r.below_b0 = j.at("below_b0").get<bool>();
    r.complete = j.at("complete").get<bool>();
    r.violations = j.at("violations").get<std::vector<std::string>>();
    r.next_level = j.at("checkpoint").at("next_level").get<std::size_t>();
    r.next_index = j.at("checkpoint").at("next_index").get<std::uint64_t>();
}

struct AuditOptions {
    std::size_t depth = 4;                 // deepest children audited
    std::size_t grid_n = 64;
    std::uint64_t work_budget = 10'000'000; // classifications per call
    std::size_t block = 4096;              // parents per parallel block
};

using VerdictSink = std::function<void(const CylinderWord&, const BadnessVerdict&)>;

/// Breadth-first audit of every parent cylinder of depth 0..depth-1. Stops
/// when the work budget is spent; pass the returned report back as `resume`
/// to continue. The sink sees children in lexicographic order.
inline AuditReport audit_partition(const SkewProduct& m, double y0, const ArcUnion& G, const ClassCertificate& cert,
                                   const AuditOptions& opt, std::optional<AuditReport> resume = std::nullopt,
                                   const VerdictSink& sink = {})
{
    if (opt.depth < 1) throw ValidationError("audit depth must be >= 1");
    AuditReport r = resume ? *resume : AuditReport{};
    const auto b = static_cast<std::uint64_t>(m.b);
    r.target_depth = opt.depth;
    r.q = cert.q_of_b(b);
    r.cap = bad_children_cap(cert.l, b);
    r.below_b0 = b < cert.b0;
    std::uint64_t spent = 0;

    while (r.next_level < opt.depth) {
        const std::size_t level = r.next_level;
        std::uint64_t level_size = 1;
        for (std::size_t i = 0; i < level; ++i) level_size *= b;
        while (r.next_index < level_size) {
            if (spent + b > opt.work_budget) return r;
            std::uint64_t room = (opt.work_budget - spent) / b;
            std::uint64_t count = std::min<std::uint64_t>({opt.block, level_size - r.next_index, room});
            std::vector<ChildAudit> res(count);
            std::vector<std::vector<BadnessVerdict>> vs(sink ? count : 0);
            const std::uint64_t base_index = r.next_index;
            parallel_for(count, [&](std::size_t i) {
                std::vector<int> parent;
                if (level > 0) parent = CylinderWord::from_index(m.b, level, base_index + i).digits();
                res[i] = audit_children(m, y0, parent, G, cert, opt.grid_n, sink ? &vs[i] : nullptr);
            });
            for (std::uint64_t i = 0; i < count; ++i) {
                const auto& a = res[i];
                r.max_bad_children = std::max(r.max_bad_children, a.bad);
                r.max_flagged_children = std::max(r.max_flagged_children, a.bad + a.unknown);
                r.unknown_children += a.unknown;
                if (!a.within_q()) {
                    r.violations.push_back(level == 0 ? std::string("<root>")
                                                      : CylinderWord::from_index(m.b, level, base_index + i).str());
                }
                if (sink) {
                    std::vector<int> parent;
                    if (level > 0) parent = CylinderWord::from_index(m.b, level, base_index + i).digits();
                    parent.push_back(1);
                    for (int j = 1; j <= m.b; ++j) {
                        parent.back() = j;
                        sink(CylinderWord(m.b, parent), vs[i][static_cast<std::size_t>(j - 1)]);
                    }
                }
            }
            r.parents_audited += count;
            r.classifications += count * b;
            spent += count * b;
            r.next_index += count;
        }
        r.depth = level + 1;
        ++r.next_level;
        r.next_index = 0;
    }
    r.complete = true;
    return r;
}

// ---------------------------------------------------------------------------
// statistics of bad prefixes

/// C(n,m) q^m (b-q)^(n-m) / b^n, in log space.
inline double binomial_bad_measure(std::uint64_t n, std::uint64_t m, std::uint64_t q, std::uint64_t b)
{
    if (m > n || q > b || b == 0) throw ValidationError("binomial_bad_measure: need 0 <= m <= n and 0 <= q <= b");
    if (q == 0) return m == 0 ? 1.0 : 0.0;
    if (q == b) return m == n ? 1.0 : 0.0;
    const double dn = static_cast<double>(n), dm = static_cast<double>(m);
    double lg = std::lgamma(dn + 1.0) - std::lgamma(dm + 1.0) - std::lgamma(dn - dm + 1.0);
    lg += dm * std::log(static_cast<double>(q)) + (dn - dm) * std::log(static_cast<double>(b - q)) -
          dn * std::log(static_cast<double>(b));
    return std::exp(lg);
}

/// Probability that more than `threshold` of n prefixes are bad.
inline double binomial_tail(std::uint64_t n, std::uint64_t threshold, std::uint64_t q, std::uint64_t b)
{
    double t = 0.0;
    for (std::uint64_t m = threshold + 1; m <= n; ++m) t += binomial_bad_measure(n, m, q, b);
    return t;
}

inline double hoeffding_bound(std::uint64_t n, std::uint64_t q, std::uint64_t b)
{
    double p = static_cast<double>(q) / static_cast<double>(b);
    return std::exp(-2.0 * static_cast<double>(n) * p * p);
}

struct PrefixStatistics {
    std::size_t depth = 0;
    std::size_t samples = 0;
    std::uint64_t q = 0;
    std::uint64_t b = 0;
    std::uint64_t threshold = 0;         // floor(2 (q/b) n)
    std::vector<std::uint64_t> histogram; // samples with exactly m bad prefixes
    double empirical_tail = 0.0;         // fraction with more than threshold bad prefixes
    double sigma = 0.0;                  // binomial sampling error of empirical_tail
    double hoeffding = 0.0;
    double exact_tail = 0.0;             // under i.i.d. badness with probability q/b
    double chi2 = 0.0;
    std::size_t chi2_dof = 0;
    double chi2_p = 1.0;
    bool within_bound = true; // empirical_tail <= hoeffding + 3 sigma

    double good_measure() const { return 1.0 - empirical_tail; }
};

inline void to_json(nlohmann::json& j, const PrefixStatistics& s)
{
    j = {{"depth", s.depth},           {"samples", s.samples},     {"q", s.q},
         {"b", s.b},                   {"threshold", s.threshold}, {"histogram", s.histogram},
         {"empirical_tail", s.empirical_tail}, {"sigma", s.sigma}, {"hoeffding", s.hoeffding},
         {"exact_tail", s.exact_tail}, {"chi2", s.chi2},           {"chi2_dof", s.chi2_dof},
         {"chi2_p", s.chi2_p},         {"within_bound", s.within_bound}};
}

/// Predicate deciding whether the prefix d[0..k) (k >= 1) is bad.
using PrefixPredicate = std::function<bool(const std::vector<int>& digits, std::size_t k)>;

/// Counts bad prefixes of sample_count uniform digit streams (digits 1..b) and
/// compares with the binomial law and the Hoeffding tail.
inline PrefixStatistics prefix_statistics(int b, std::uint64_t q, std::size_t depth_n, std::size_t sample_count,
                                          std::uint64_t seed, const PrefixPredicate& is_bad)
{
    if (depth_n < 4) throw ValidationError("prefix statistics need depth >= 4");
    if (sample_count < 1) throw ValidationError("need at least one sample");
    PrefixStatistics st;
    st.depth = depth_n;
    st.samples = sample_count;
    st.q = q;
    st.b = static_cast<std::uint64_t>(b);
    st.threshold = static_cast<std::uint64_t>(std::floor(2.0 * static_cast<double>(q) / b * static_cast<double>(depth_n)));
    st.histogram.assign(depth_n + 1, 0);

    std::vector<std::uint32_t> counts(sample_count);
    parallel_for(sample_count, [&](std::size_t i) {
        std::mt19937_64 rng(derive_seed(seed, i));
        std::vector<int> d(depth_n);
        for (auto& x : d) x = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(b))) + 1;
        std::uint32_t c = 0;
        for (std::size_t k = 1; k <= depth_n; ++k) c += is_bad(d, k) ? 1 : 0;
        counts[i] = c;
    });
    std::uint64_t tail = 0;
    for (auto c : counts) {
        ++st.histogram[c];
        if (c > st.threshold) ++tail;
    }
    const double N = static_cast<double>(sample_count);
    st.empirical_tail = static_cast<double>(tail) / N;
    st.sigma = std::sqrt(st.empirical_tail * (1.0 - st.empirical_tail) / N);
    st.hoeffding = hoeffding_bound(depth_n, q, st.b);
    st.exact_tail = binomial_tail(depth_n, st.threshold, q, st.b);
    st.within_bound = st.empirical_tail <= st.hoeffding + 3.0 * st.sigma;

    // chi-squared against the binomial law, pooling bins with expectation < 5;
    // a leftover partial bin joins the last pooled one
    std::vector<std::pair<double, double>> pooled; // (observed, expected)
    double obs = 0.0, expct = 0.0;
    for (std::size_t m = 0; m <= depth_n; ++m) {
        obs += static_cast<double>(st.histogram[m]);
        expct += N * binomial_bad_measure(depth_n, m, q, st.b);
        if (expct >= 5.0) {
            pooled.emplace_back(obs, expct);
            obs = expct = 0.0;
        }
    }
    if (obs > 0.0 || expct > 0.0) {
        if (pooled.empty()) pooled.emplace_back(obs, expct);
        else {
            pooled.back().first += obs;
            pooled.back().second += expct;
        }
    }
    double chi2 = 0.0;
    for (auto [o, e] : pooled)
        if (e > 0.0) chi2 += (o - e) * (o - e) / e;
    const std::size_t bins = pooled.size();
    st.chi2 = chi2;
    st.chi2_dof = bins > 1 ? bins - 1 : 0;
    if (st.chi2_dof > 0) {
        boost::math::chi_squared dist(static_cast<double>(st.chi2_dof));
        st.chi2_p = boost::math::cdf(boost::math::complement(dist, chi2));
    }
    return st;
}

/// Badness that is i.i.d. with probability q/b: a prefix is bad when its last
/// digit is at most q.
inline PrefixPredicate synthetic_badness(std::uint64_t q)
{
    return [q](const std::vector<int>& d, std::size_t k) { return static_cast<std::uint64_t>(d[k - 1]) <= q; };
}

/// Bad prefix statistics for a map: prefixes classified by classify_cylinder,
/// unknown counted as bad.
inline PrefixStatistics bad_prefix_statistics(const SkewProduct& m, double y0, const ArcUnion& G,
                                              const ClassCertificate& cert, std::size_t depth_n, std::size_t sample_count,
                                              std::uint64_t seed, std::size_t grid_n = 64)
{
    auto pred = [&](const std::vector<int>& d, std::size_t k) {
        std::vector<int> pre(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k));
        return classify_cylinder(m, y0, CylinderWord(m.b, std::move(pre)), G, grid_n).status != Badness::good;
    };
    return prefix_statistics(m.b, cert.q_of_b(static_cast<std::uint64_t>(m.b)), depth_n, sample_count, seed, pred);
}

} // namespace fibresync
