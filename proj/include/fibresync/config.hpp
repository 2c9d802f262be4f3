// Run configuration: schema validation with aggregated errors, default
// injection, and construction of maps and base trajectories from JSON.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fibresync/base_trajectory.hpp"
#include "fibresync/certify.hpp"
#include "fibresync/errors.hpp"
#include "fibresync/maps.hpp"

namespace fibresync {

using nlohmann::json;

inline const std::vector<std::string>& subcommands()
{
    static const std::vector<std::string> names = {"certify", "orbit",  "lyapunov", "sync",    "scatter",
                                                   "audit-partition", "schrodinger", "figure1", "figure2", "survey"};
    return names;
}

/// Thrown with every violation found in one pass.
class ConfigError : public ValidationError {
public:
    explicit ConfigError(std::vector<std::string> errs) : ValidationError(join(errs)), errors(std::move(errs)) {}
    std::vector<std::string> errors;

private:
    static std::string join(const std::vector<std::string>& e)
    {
        std::string s;
        for (const auto& x : e) s += (s.empty() ? "" : "; ") + x;
        return s;
    }
};

namespace detail {

class Checker {
public:
    std::vector<std::string> errors;

    void unknown_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where)
    {
        for (auto it = obj.begin(); it != obj.end(); ++it)
            if (!allowed.count(it.key())) errors.push_back("unknown key '" + it.key() + "' in " + where);
    }

    /// Fills a default, then checks type and range. Returns false on a type error.
    bool number(json& obj, const std::string& key, const std::string& where, std::optional<double> def,
                const std::function<bool(double)>& ok, const std::string& range_msg)
    {
        if (!obj.contains(key)) {
            if (!def) {
                errors.push_back("missing '" + key + "' in " + where);
                return false;
            }
            obj[key] = *def;
        }
        if (!obj[key].is_number()) {
            errors.push_back("'" + key + "' in " + where + " must be a number");
            return false;
        }
        if (!ok(obj[key].get<double>())) errors.push_back(range_msg);
        return true;
    }

    bool integer(json& obj, const std::string& key, const std::string& where, std::optional<std::int64_t> def,
                 const std::function<bool(std::int64_t)>& ok, const std::string& range_msg)
    {
        if (!obj.contains(key)) {
            if (!def) {
                errors.push_back("missing '" + key + "' in " + where);
                return false;
            }
            obj[key] = *def;
        }
        if (!obj[key].is_number_integer()) {
            errors.push_back("'" + key + "' in " + where + " must be an integer");
            return false;
        }
        if (!ok(obj[key].get<std::int64_t>())) errors.push_back(range_msg);
        return true;
    }

    void boolean(json& obj, const std::string& key, const std::string& where, bool def)
    {
        if (!obj.contains(key)) obj[key] = def;
        if (!obj[key].is_boolean()) errors.push_back("'" + key + "' in " + where + " must be a boolean");
    }

    void string_of(json& obj, const std::string& key, const std::string& where, const std::string& def,
                   const std::set<std::string>& choices)
    {
        if (!obj.contains(key)) obj[key] = def;
        if (!obj[key].is_string() || !choices.count(obj[key].get<std::string>()))
            errors.push_back("'" + key + "' in " + where + " has an unsupported value");
    }
};

inline bool positive_int(std::int64_t v) { return v >= 1; }

inline void check_g(Checker& c, json& g)
{
    const std::string where = "map.g";
    if (!g.is_object()) {
        c.errors.push_back("map.g must be an object");
        return;
    }
    c.string_of(g, "kind", where, "sine", {"zero", "cos3pi", "sine", "linear"});
    std::string kind = g["kind"].is_string() ? g["kind"].get<std::string>() : "";
    if (kind == "sine") {
        c.unknown_keys(g, {"kind", "amplitude", "frequency"}, where);
        c.number(g, "amplitude", where, 0.05, [](double v) { return std::isfinite(v); }, "map.g.amplitude must be finite");
        c.integer(g, "frequency", where, 1, positive_int, "map.g.frequency must be >= 1");
    } else if (kind == "linear") {
        c.unknown_keys(g, {"kind", "degree"}, where);
        c.integer(g, "degree", where, 1, [](std::int64_t) { return true; }, "");
    } else {
        c.unknown_keys(g, {"kind"}, where);
    }
}

inline void check_h(Checker& c, json& h)
{
    const std::string where = "map.h";
    if (!h.is_object()) {
        c.errors.push_back("map.h must be an object");
        return;
    }
    c.string_of(h, "kind", where, "sine", {"identity", "shift", "example1", "sine"});
    std::string kind = h["kind"].is_string() ? h["kind"].get<std::string>() : "";
    if (kind == "sine") {
        c.unknown_keys(h, {"kind", "offset", "amplitude"}, where);
        c.number(h, "offset", where, 0.25, [](double v) { return std::isfinite(v); }, "map.h.offset must be finite");
        c.number(h, "amplitude", where, 0.1, [](double v) { return std::isfinite(v); }, "map.h.amplitude must be finite");
    } else if (kind == "shift") {
        c.unknown_keys(h, {"kind", "offset"}, where);
        c.number(h, "offset", where, 0.0, [](double v) { return std::isfinite(v); }, "map.h.offset must be finite");
    } else if (kind == "example1") {
        c.unknown_keys(h, {"kind", "eps_tilde", "c0"}, where);
        c.number(h, "eps_tilde", where, 1.0 / 6000.0, [](double v) { return v > 0 && v < 0.125; },
                 "eps_tilde out of (0, 1/8)");
        c.number(h, "c0", where, 0.15, [](double v) { return v > 0 && v <= 0.18; }, "c0 out of (0, 0.18]");
    } else {
        c.unknown_keys(h, {"kind"}, where);
    }
}

inline void check_map(Checker& c, json& m)
{
    if (!m.is_object()) {
        c.errors.push_back("'map' must be an object");
        return;
    }
    c.string_of(m, "family", "map", "example1", {"example1", "schrodinger", "additive"});
    std::string fam = m["family"].is_string() ? m["family"].get<std::string>() : "";
    auto b_ok = [](std::int64_t b) { return b >= 2; };
    if (fam == "example1") {
        c.unknown_keys(m, {"family", "eps_tilde", "c0"}, "map");
        c.number(m, "eps_tilde", "map", 1.0 / 6000.0, [](double v) { return v > 0 && v < 0.125; },
                 "eps_tilde out of (0, 1/8)");
        c.number(m, "c0", "map", 0.15, [](double v) { return v > 0 && v <= 0.18; }, "c0 out of (0, 0.18]");
    } else if (fam == "schrodinger") {
        c.unknown_keys(m, {"family", "lambda", "energy", "b", "potential"}, "map");
        c.number(m, "lambda", "map", 30.0, [](double v) { return v > 0 && std::isfinite(v); }, "lambda must be > 0");
        c.number(m, "energy", "map", 0.0, [](double v) { return std::isfinite(v); }, "energy must be finite");
        c.integer(m, "b", "map", 10000, b_ok, "b must be an integer >= 2");
        if (!m.contains("potential")) m["potential"] = "cos2pi";
        const json& v = m["potential"];
        bool ok = (v.is_string() && v.get<std::string>() == "cos2pi") ||
                  (v.is_object() && v.size() == 1 && v.contains("constant") && v["constant"].is_number());
        if (!ok) c.errors.push_back("map.potential must be \"cos2pi\" or {\"constant\": value}");
    } else if (fam == "additive") {
        c.unknown_keys(m, {"family", "b", "g", "h"}, "map");
        c.integer(m, "b", "map", 40, b_ok, "b must be an integer >= 2");
        if (!m.contains("g")) m["g"] = json::object();
        if (!m.contains("h")) m["h"] = json::object();
        check_g(c, m["g"]);
        check_h(c, m["h"]);
    }
}

inline void check_x0(Checker& c, json& cmd, const std::string& key, const json& def, unsigned bits)
{
    if (!cmd.contains(key)) cmd[key] = def;
    json& x = cmd[key];
    const std::string where = "command." + key;
    if (!x.is_object() || x.empty()) {
        c.errors.push_back(where + " must be an object");
        return;
    }
    if (x.contains("rational")) {
        c.unknown_keys(x, {"rational"}, where);
        const json& r = x["rational"];
        if (!r.is_array() || r.size() != 2 || !r[0].is_number_integer() || !r[1].is_number_integer() ||
            r[1].get<std::int64_t>() <= 0)
            c.errors.push_back(where + ".rational must be [p, q] with q > 0");
    } else if (x.contains("decimal")) {
        c.unknown_keys(x, {"decimal", "bits"}, where);
        if (!x["decimal"].is_string()) c.errors.push_back(where + ".decimal must be a string");
        c.integer(x, "bits", where, bits, [](std::int64_t v) { return v >= 64 && v <= (1 << 26); },
                  where + ".bits must lie in [64, 2^26]");
    } else if (x.contains("pi_fraction")) {
        c.unknown_keys(x, {"pi_fraction", "bits"}, where);
        const json& r = x["pi_fraction"];
        if (!r.is_array() || r.size() != 2 || !r[0].is_number_integer() || !r[1].is_number_integer() ||
            r[1].get<std::int64_t>() == 0)
            c.errors.push_back(where + ".pi_fraction must be [num, den] with den != 0");
        c.integer(x, "bits", where, bits, [](std::int64_t v) { return v >= 64 && v <= (1 << 26); },
                  where + ".bits must lie in [64, 2^26]");
    } else if (x.contains("random")) {
        c.unknown_keys(x, {"random"}, where);
        if (!x["random"].is_number_unsigned() && !x["random"].is_number_integer())
            c.errors.push_back(where + ".random must be an integer seed");
    } else {
        c.errors.push_back(where + " needs one of rational, decimal, pi_fraction, random");
    }
}

inline void check_y(Checker& c, json& cmd, const std::string& key, double def)
{
    c.number(cmd, key, "command", def, [](double v) { return std::isfinite(v); }, "command." + key + " must be finite");
}

inline void check_certify_block(Checker& c, json& cmd)
{
    c.number(cmd, "C", "command", 0.2, [](double v) { return v > 0 && v < 1; }, "C out of (0, 1)");
    c.integer(cmd, "contraction_grid", "command", 100000, [](std::int64_t v) { return v >= 1000; },
              "contraction_grid must be >= 1000");
    c.integer(cmd, "y_grid", "command", 10000, [](std::int64_t v) { return v >= 1000; }, "y_grid must be >= 1000");
    c.integer(cmd, "x_grid", "command", 100000, [](std::int64_t v) { return v >= 1000; }, "x_grid must be >= 1000");
    c.integer(cmd, "max_delta_rung", "command", 40, [](std::int64_t v) { return v >= 1 && v <= 60; },
              "max_delta_rung must lie in [1, 60]");
    if (cmd.contains("eps_prime"))
        c.number(cmd, "eps_prime", "command", std::nullopt, [](double v) { return v > 0 && v < 1; },
                 "eps_prime out of (0, 1)");
}

inline const std::set<std::string> certify_keys = {"C", "contraction_grid", "y_grid", "x_grid", "max_delta_rung",
                                                   "eps_prime"};

inline void check_command(Checker& c, const std::string& sub, json& cmd, const json& map, unsigned bits,
                          std::uint64_t seed)
{
    if (!cmd.is_object()) {
        c.errors.push_back("'command' must be an object");
        return;
    }
    const std::string fam = map.value("family", "");
    auto n_ok = [](std::int64_t v) { return v >= 1; };
    const json random_x0 = {{"random", seed}};
    const json fig_x0 = {{"pi_fraction", {1, 350}}, {"bits", bits}};
    std::set<std::string> allowed;
    if (sub == "certify") {
        allowed = certify_keys;
        check_certify_block(c, cmd);
    } else if (sub == "orbit" || sub == "lyapunov" || sub == "scatter") {
        allowed = {"x0", "y0", "n"};
        check_x0(c, cmd, "x0", random_x0, bits);
        check_y(c, cmd, "y0", sub == "scatter" ? 0.06 : 0.3);
        c.integer(cmd, "n", "command", sub == "scatter" ? 100000 : 10000, n_ok, "n must be >= 1");
        if (sub == "lyapunov") {
            allowed.insert("trace_points");
            c.integer(cmd, "trace_points", "command", 1000, n_ok, "trace_points must be >= 1");
        }
        if (sub == "scatter") {
            allowed.insert("bins");
            c.integer(cmd, "bins", "command", 100, n_ok, "bins must be >= 1");
        }
    } else if (sub == "sync") {
        allowed = {"x0", "k", "n", "tolerance"};
        check_x0(c, cmd, "x0", fig_x0, bits);
        c.integer(cmd, "k", "command", 50, n_ok, "k must be >= 1");
        c.integer(cmd, "n", "command", 200, n_ok, "n must be >= 1");
        c.number(cmd, "tolerance", "command", 1e-6, [](double v) { return v > 0; }, "tolerance must be > 0");
    } else if (sub == "audit-partition") {
        allowed = certify_keys;
        for (const char* k : {"y0", "depth", "grid_n", "work_budget", "use_b0", "checkpoint", "write_verdicts"})
            allowed.insert(k);
        check_certify_block(c, cmd);
        check_y(c, cmd, "y0", 0.0);
        c.integer(cmd, "depth", "command", 4, [](std::int64_t v) { return v >= 1 && v <= 12; }, "depth must lie in [1, 12]");
        c.integer(cmd, "grid_n", "command", 64, [](std::int64_t v) { return v >= 16; }, "grid_n must be >= 16");
        c.integer(cmd, "work_budget", "command", 10000000, n_ok, "work_budget must be >= 1");
        c.boolean(cmd, "use_b0", "command", fam == "additive");
        c.boolean(cmd, "write_verdicts", "command", true);
        if (cmd.contains("checkpoint") && !cmd["checkpoint"].is_string())
            c.errors.push_back("command.checkpoint must be a path string");
    } else if (sub == "schrodinger") {
        allowed = {"x0", "u0", "n", "fit_lambdas", "u_samples", "x_grid"};
        check_x0(c, cmd, "x0", random_x0, bits);
        check_y(c, cmd, "u0", 0.3);
        c.integer(cmd, "n", "command", 10000, n_ok, "n must be >= 1");
        if (!cmd.contains("fit_lambdas")) cmd["fit_lambdas"] = json::array({100.0, 1000.0, 10000.0});
        const json& fl = cmd["fit_lambdas"];
        bool ok = fl.is_array() && (fl.empty() || fl.size() >= 2);
        if (ok)
            for (const auto& v : fl) ok = ok && v.is_number() && v.get<double>() > 0;
        if (!ok) c.errors.push_back("command.fit_lambdas must be empty or at least two positive numbers");
        c.integer(cmd, "u_samples", "command", 400, n_ok, "u_samples must be >= 1");
        c.integer(cmd, "x_grid", "command", 20000, [](std::int64_t v) { return v >= 1000; }, "x_grid must be >= 1000");
    } else if (sub == "figure1") {
        allowed = {"panel", "x0", "k", "n_left", "n_right", "y0", "bins"};
        c.string_of(cmd, "panel", "command", "both", {"left", "right", "both"});
        check_x0(c, cmd, "x0", fig_x0, bits);
        c.integer(cmd, "k", "command", 50, n_ok, "k must be >= 1");
        c.integer(cmd, "n_left", "command", 200, n_ok, "n_left must be >= 1");
        c.integer(cmd, "n_right", "command", 100000, n_ok, "n_right must be >= 1");
        check_y(c, cmd, "y0", 3.0 / 50.0);
        c.integer(cmd, "bins", "command", 100, n_ok, "bins must be >= 1");
    } else if (sub == "figure2") {
        allowed = {"samples", "grid_n"};
        c.integer(cmd, "samples", "command", 10000, [](std::int64_t v) { return v >= 2; }, "samples must be >= 2");
        c.integer(cmd, "grid_n", "command", 1000000, [](std::int64_t v) { return v >= 1000; }, "grid_n must be >= 1000");
    } else if (sub == "survey") {
        allowed = {"samples", "n", "C"};
        c.integer(cmd, "samples", "command", 1000, n_ok, "samples must be >= 1");
        c.integer(cmd, "n", "command", 10000, n_ok, "n must be >= 1");
        c.number(cmd, "C", "command", 0.2, [](double v) { return v > 0 && v < 1; }, "C out of (0, 1)");
    }
    c.unknown_keys(cmd, allowed, "command");
}

} // namespace detail

struct RunConfig {
    std::string subcommand;
    json doc; // normalized, defaults filled in

    const json& map() const { return doc.at("map"); }
    const json& command() const { return doc.at("command"); }
    std::uint64_t seed() const { return doc.at("seed").get<std::uint64_t>(); }
    unsigned precision_bits() const { return doc.at("precision_bits").get<unsigned>(); }
    std::string output_dir() const { return doc.at("output_dir").get<std::string>(); }
};

/// Validates `doc` for `subcommand`; every violation is reported at once.
inline RunConfig validate_config(const std::string& subcommand, json doc)
{
    detail::Checker c;
    bool known = false;
    for (const auto& s : subcommands()) known = known || s == subcommand;
    if (!known) throw ConfigError({"unknown subcommand '" + subcommand + "'"});
    if (doc.is_null()) doc = json::object();
    if (!doc.is_object()) throw ConfigError({"config must be a JSON object"});

    c.unknown_keys(doc, {"map", "command", "output_dir", "seed", "precision_bits"}, "config");
    if (!doc.contains("seed")) doc["seed"] = 20240601;
    {
        const json& s = doc["seed"];
        bool ok = s.is_number_unsigned() || (s.is_number_integer() && s.get<std::int64_t>() >= 0);
        if (!ok) c.errors.push_back("seed must be a non-negative integer");
        else doc["seed"] = s.get<std::uint64_t>();
    }
    if (!doc.contains("output_dir")) doc["output_dir"] = "out";
    if (!doc["output_dir"].is_string()) c.errors.push_back("output_dir must be a string");
    c.integer(doc, "precision_bits", "config", 256, [](std::int64_t v) { return v >= 64 && v <= (1 << 26); },
              "precision_bits must lie in [64, 2^26]");

    if (!doc.contains("map")) {
        json m = json::object();
        if (subcommand == "schrodinger") m["family"] = "schrodinger";
        if (subcommand == "figure2") m["eps_tilde"] = 0.05;
        doc["map"] = m;
    }
    detail::check_map(c, doc["map"]);
    if (!doc.contains("command")) doc["command"] = json::object();
    const unsigned bits =
        doc["precision_bits"].is_number_integer() ? doc["precision_bits"].get<unsigned>() : 256u;
    const std::uint64_t seed = doc["seed"].is_number_integer() ? doc["seed"].get<std::uint64_t>() : 0;
    detail::check_command(c, subcommand, doc["command"], doc["map"], bits, seed);

    const std::string fam = doc["map"].is_object() ? doc["map"].value("family", "") : "";
    if ((subcommand == "figure1" || subcommand == "figure2") && fam != "example1")
        c.errors.push_back(subcommand + " requires the example1 family");
    if (subcommand == "schrodinger" && fam != "schrodinger") c.errors.push_back("schrodinger requires the schrodinger family");

    if (!c.errors.empty()) throw ConfigError(c.errors);
    return {subcommand, doc};
}

// ---------------------------------------------------------------------------
// builders

inline GPiece make_g(const json& g)
{
    std::string k = g.at("kind").get<std::string>();
    if (k == "zero") return GPiece::zero();
    if (k == "cos3pi") return GPiece::cos3pi();
    if (k == "linear") return GPiece::linear(g.at("degree").get<int>());
    return GPiece::sine(g.at("amplitude").get<double>(), g.at("frequency").get<int>());
}

inline HPiece make_h(const json& h)
{
    std::string k = h.at("kind").get<std::string>();
    if (k == "identity") return HPiece::identity();
    if (k == "shift") return HPiece::shift(h.at("offset").get<double>());
    if (k == "example1") return HPiece::example1(Example1Params(h.at("eps_tilde").get<double>(), h.at("c0").get<double>()));
    return HPiece::sine(h.at("offset").get<double>(), h.at("amplitude").get<double>());
}

inline Potential make_potential(const json& v)
{
    if (v.is_string()) return Potential::cos2pi();
    return Potential::constant(v.at("constant").get<double>());
}

inline SchrodingerParams make_schrodinger_params(const json& m)
{
    return SchrodingerParams(m.at("lambda").get<double>(), m.at("energy").get<double>(), make_potential(m.at("potential")),
                             m.at("b").get<int>());
}

/// Builds the skew product of a validated map block; b_override replaces b
/// for the additive family.
inline SkewProduct make_map(const json& m, std::optional<std::uint64_t> b_override = std::nullopt)
{
    std::string fam = m.at("family").get<std::string>();
    if (fam == "example1") return example1_map(Example1Params(m.at("eps_tilde").get<double>(), m.at("c0").get<double>()));
    if (fam == "schrodinger") return schrodinger_projective(make_schrodinger_params(m));
    int b = m.at("b").get<int>();
    if (b_override) {
        if (*b_override > static_cast<std::uint64_t>(std::numeric_limits<int>::max()))
            throw NumericalError("b0 too large to instantiate the map");
        b = static_cast<int>(*b_override);
    }
    SkewProduct sp = make_additive(b, make_g(m.at("g")), make_h(m.at("h")));
    return sp;
}

inline X0Descriptor make_x0(const json& x)
{
    if (x.contains("rational")) return X0Rational{x["rational"][0].get<std::int64_t>(), x["rational"][1].get<std::int64_t>()};
    if (x.contains("decimal")) return X0Decimal{x["decimal"].get<std::string>(), x["bits"].get<unsigned>()};
    if (x.contains("pi_fraction"))
        return X0PiFraction{x["pi_fraction"][0].get<std::int64_t>(), x["pi_fraction"][1].get<std::int64_t>(),
                            x["bits"].get<unsigned>()};
    return X0Random{x["random"].get<std::uint64_t>()};
}

inline CertifyOptions make_certify_options(const json& cmd)
{
    CertifyOptions o;
    o.C = cmd.at("C").get<double>();
    o.contraction_grid = cmd.at("contraction_grid").get<std::size_t>();
    o.y_grid = cmd.at("y_grid").get<std::size_t>();
    o.x_grid = cmd.at("x_grid").get<std::size_t>();
    o.max_delta_rung = cmd.at("max_delta_rung").get<int>();
    if (cmd.contains("eps_prime")) o.eps_prime = cmd["eps_prime"].get<double>();
    return o;
}

} // namespace fibresync
