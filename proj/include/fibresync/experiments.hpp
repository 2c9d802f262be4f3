// Reproductions of the published figures and theorem-level surveys, with
// deterministic CSV output and a JSON manifest per run.
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fibresync/base_trajectory.hpp"
#include "fibresync/certify.hpp"
#include "fibresync/circle.hpp"
#include "fibresync/dynamics.hpp"
#include "fibresync/errors.hpp"
#include "fibresync/maps.hpp"
#include "fibresync/parallel.hpp"

namespace fibresync {

inline constexpr const char* version = "1.0.0";

/// Shortest round-trip decimal form; identical bytes for identical doubles.
inline std::string fmt(double v)
{
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path)
    {
        if (!out_) throw std::runtime_error("cannot open " + path.string());
        row_strings(header);
    }

    template <typename... Ts>
    void row(const Ts&... vals)
    {
        bool first = true;
        ((out_ << (first ? "" : ",") << cell(vals), first = false), ...);
        out_ << '\n';
    }

    void row_strings(const std::vector<std::string>& cells)
    {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
    }

private:
    static std::string cell(double v) { return fmt(v); }
    static std::string cell(const std::string& s) { return s; }
    static std::string cell(const char* s) { return s; }
    template <typename T>
    static std::string cell(T v) requires std::is_integral_v<T>
    {
        return std::to_string(v);
    }

    std::ofstream out_;
};

struct RunManifest {
    std::string command;
    std::string family;
    nlohmann::json params;
    std::uint64_t seed = 0;
    unsigned precision_bits = 0;
    std::size_t n = 0;
    nlohmann::json grids = nlohmann::json::object();
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json summary = nlohmann::json::object();
    std::vector<std::string> outputs;
};

inline void to_json(nlohmann::json& j, const RunManifest& m)
{
    j = {{"command", m.command}, {"family", m.family},   {"params", m.params},   {"seed", m.seed},
         {"precision_bits", m.precision_bits}, {"n", m.n}, {"grids", m.grids}, {"version", version},
         {"config", m.config},   {"summary", m.summary}, {"outputs", m.outputs}};
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// figure 1

inline X0Descriptor figure1_x0(unsigned bits = 256) { return X0PiFraction{1, 350, bits}; }

struct SyncRun {
    std::size_t k = 0;
    std::size_t n = 0;
    std::vector<std::vector<double>> trace; // trace[j][i] = y_j of point i
    std::vector<double> diameter;
    unsigned precision_bits = 0;

    /// First step from which the diameter stays below tol, or n + 1 if never.
    std::size_t settled_below(double tol) const
    {
        std::size_t j = diameter.size();
        while (j > 0 && diameter[j - 1] < tol) --j;
        return j;
    }
};

/// k equispaced fibre points over one base trajectory.
inline SyncRun run_sync(const SkewProduct& m, const BaseTrajectory& base, std::size_t k, std::size_t n)
{
    if (k < 1) throw ValidationError("need at least one fibre point");
    std::vector<CirclePoint> ys;
    for (std::size_t i = 0; i < k; ++i) ys.emplace_back(static_cast<double>(i) / static_cast<double>(k));
    SyncRun r;
    r.k = k;
    r.n = n;
    r.diameter = sync_diameter(m, base, ys, n, &r.trace);
    r.precision_bits = base.precision_bits();
    return r;
}

inline SyncRun figure1_left(double eps_tilde = 1.0 / 6000.0, std::size_t k = 50, std::size_t n = 200,
                            X0Descriptor x0 = figure1_x0())
{
    SkewProduct m = example1_map(Example1Params(eps_tilde));
    BaseTrajectory base(m.b, std::move(x0));
    return run_sync(m, base, k, n);
}

inline void write_sync_csv(const SyncRun& r, const std::filesystem::path& points, const std::filesystem::path& diam)
{
    CsvWriter pw(points, {"j", "point_index", "y"});
    for (std::size_t j = 0; j < r.trace.size(); ++j)
        for (std::size_t i = 0; i < r.trace[j].size(); ++i) pw.row(j, i, r.trace[j][i]);
    CsvWriter dw(diam, {"j", "diameter"});
    for (std::size_t j = 0; j < r.diameter.size(); ++j) dw.row(j, r.diameter[j]);
}

struct ScatterRun {
    std::vector<std::pair<double, double>> points; // (x_j, y_j), j = 0..n-1
    unsigned precision_bits = 0;
};

/// The first n points of the orbit of (x0, y0).
inline ScatterRun orbit_scatter(const SkewProduct& m, const BaseTrajectory& base, CirclePoint y0, std::size_t n)
{
    if (n < 1) throw ValidationError("n must be >= 1");
    ScatterRun r;
    r.points.reserve(n);
    auto cur = base.cursor();
    double y = y0.value();
    for (std::size_t j = 0; j < n; ++j) {
        double x = cur.point();
        r.points.emplace_back(x, y);
        y = m.fibre.eval(x, y);
        if (j + 1 < n) cur.advance();
    }
    r.precision_bits = base.precision_bits();
    return r;
}

inline ScatterRun figure1_right(double eps_tilde = 1.0 / 6000.0, std::size_t n = 100000, double y0 = 3.0 / 50.0,
                                X0Descriptor x0 = figure1_x0())
{
    SkewProduct m = example1_map(Example1Params(eps_tilde));
    BaseTrajectory base(m.b, std::move(x0));
    return orbit_scatter(m, base, CirclePoint(y0), n);
}

inline void write_scatter_csv(const ScatterRun& r, const std::filesystem::path& path)
{
    CsvWriter w(path, {"x", "y"});
    for (auto [x, y] : r.points) w.row(x, y);
}

struct Histogram {
    std::vector<std::size_t> counts;
    double expected = 0.0;
    double max_relative_deviation = 0.0; // max_i |count_i - expected| / expected
};

inline Histogram uniform_histogram(const std::vector<double>& xs, std::size_t bins)
{
    if (bins < 1 || xs.empty()) throw ValidationError("histogram needs bins and data");
    Histogram h;
    h.counts.assign(bins, 0);
    for (double x : xs) {
        auto k = static_cast<std::size_t>(x * static_cast<double>(bins));
        ++h.counts[std::min(k, bins - 1)];
    }
    h.expected = static_cast<double>(xs.size()) / static_cast<double>(bins);
    for (auto c : h.counts)
        h.max_relative_deviation = std::max(h.max_relative_deviation, std::abs(static_cast<double>(c) - h.expected) / h.expected);
    return h;
}

// ---------------------------------------------------------------------------
// figure 2

struct Figure2 {
    double eps_tilde = 0.05;
    std::vector<std::pair<double, double>> curve; // (x, g(x) + 1/2)
    ArcUnion G;                                  // complement of [0.5 - 2 eps, 0.5 + 2 eps]
    SublevelReport escape;
    double lower = 0.0, upper = 0.0;             // band edges
};

inline ArcUnion example1_contraction_target(double eps_tilde)
{
    double w = 4.0 * eps_tilde;
    return ArcUnion::normalize({Arc(0.5 + 2.0 * eps_tilde, 1.0 - w)});
}

/// The escape set over the fibre point whose image is g(x) + 1/2 (h(1/2) = 1/2).
inline Figure2 figure2(double eps_tilde = 0.05, std::size_t samples = 10000, std::size_t grid_n = 1000000)
{
    if (samples < 2) throw ValidationError("figure2 needs at least two curve samples");
    Example1Params p(eps_tilde);
    SkewProduct m = example1_map(p);
    Figure2 f;
    f.eps_tilde = eps_tilde;
    f.lower = 0.5 - 2.0 * eps_tilde;
    f.upper = 0.5 + 2.0 * eps_tilde;
    f.G = example1_contraction_target(eps_tilde);
    GPiece g = GPiece::cos3pi();
    f.curve.reserve(samples);
    for (std::size_t i = 0; i < samples; ++i) {
        double x = static_cast<double>(i) / static_cast<double>(samples - 1);
        f.curve.emplace_back(x, g(x) + 0.5);
    }
    f.escape = escape_set(m.fibre, f.G, CirclePoint(0.5), grid_n);
    return f;
}

inline void write_figure2(const Figure2& f, const std::filesystem::path& curve, const std::filesystem::path& escape)
{
    CsvWriter cw(curve, {"x", "y", "lower", "upper"});
    for (auto [x, y] : f.curve) cw.row(x, y, f.lower, f.upper);
    CsvWriter ew(escape, {"start", "length"});
    for (const auto& a : f.escape.set.arcs()) ew.row(a.start.value(), a.length);
}

// ---------------------------------------------------------------------------
// surveys

struct SurveyResult {
    std::vector<double> estimates;
    std::vector<bool> truncated;
    double threshold = 0.0;
    double fraction_below = 0.0;
    double max_estimate = 0.0;
    double mean = 0.0;
};

/// Random start i uses an i.i.d. digit stream seeded by derive_seed(seed, 2i)
/// and y0 drawn from derive_seed(seed, 2i + 1).
inline SurveyResult lyapunov_survey(const SkewProduct& m, std::size_t sample_count, std::size_t n, std::uint64_t seed,
                                    double threshold)
{
    if (sample_count < 1) throw ValidationError("survey needs at least one sample");
    SurveyResult r;
    r.threshold = threshold;
    r.estimates.resize(sample_count);
    std::vector<char> trunc(sample_count, 0);
    parallel_for(sample_count, [&](std::size_t i) {
        BaseTrajectory base(m.b, X0Random{derive_seed(seed, 2 * i)});
        std::mt19937_64 rng(derive_seed(seed, 2 * i + 1));
        LyapunovEstimate e = fibered_lyapunov(m, base, CirclePoint(uniform_unit(rng)), n, 1);
        r.estimates[i] = e.value;
        trunc[i] = e.truncated ? 1 : 0;
    });
    std::size_t below = 0;
    r.max_estimate = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < sample_count; ++i) {
        below += r.estimates[i] < threshold ? 1 : 0;
        r.max_estimate = std::max(r.max_estimate, r.estimates[i]);
        r.mean += r.estimates[i];
        r.truncated.push_back(trunc[i] != 0);
    }
    r.mean /= static_cast<double>(sample_count);
    r.fraction_below = static_cast<double>(below) / static_cast<double>(sample_count);
    return r;
}

struct IdentityCheck {
    double fibered = 0.0;      // (1/n) sum log |d_u f| along the projective orbit
    double max_lyapunov = 0.0; // (1/n) log ||A^n||
    double tan_product = 0.0;  // (-2/n) sum log |tan theta_i|
    double gap = 0.0;          // |fibered + 2 max_lyapunov|
    bool truncated = false;
};

inline IdentityCheck schrodinger_identity(const SchrodingerParams& p, const BaseTrajectory& base, CirclePoint u0,
                                          std::size_t n)
{
    SkewProduct m = schrodinger_projective(p);
    IdentityCheck c;
    LyapunovEstimate e = fibered_lyapunov(m, base, u0, n, 1);
    c.fibered = e.value;
    c.truncated = e.truncated;
    c.max_lyapunov = max_lyapunov_sl2(p, base, n);
    c.tan_product = schrodinger_tan_product(p, base, u0, n);
    c.gap = std::abs(c.fibered + 2.0 * c.max_lyapunov);
    return c;
}

} // namespace fibresync
