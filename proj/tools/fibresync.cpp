// fibresync: command-line front end.
//
// Exit status: 0 success, 1 invalid input, 2 certification failure,
// 3 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fibresync/certify.hpp"
#include "fibresync/config.hpp"
#include "fibresync/cylinders.hpp"
#include "fibresync/dynamics.hpp"
#include "fibresync/experiments.hpp"

namespace fs = std::filesystem;
using namespace fibresync;
using nlohmann::json;

namespace {

enum Exit { ok = 0, invalid = 1, cert_failed = 2, numerical = 3 };

struct Run {
    RunConfig cfg;
    fs::path dir;
    RunManifest manifest;

    fs::path out(const std::string& name)
    {
        manifest.outputs.push_back(name);
        return dir / name;
    }

    void finish()
    {
        manifest.outputs.push_back(manifest.command + "_manifest.json");
        write_json(dir / (manifest.command + "_manifest.json"), manifest);
    }
};

Run start(const RunConfig& cfg, const SkewProduct* m)
{
    Run r{cfg, fs::path(cfg.output_dir()), {}};
    fs::create_directories(r.dir);
    r.manifest.command = cfg.subcommand;
    r.manifest.family = cfg.map().at("family").get<std::string>();
    r.manifest.params = m ? m->fibre.params : cfg.map();
    r.manifest.seed = cfg.seed();
    r.manifest.precision_bits = cfg.precision_bits();
    r.manifest.config = cfg.doc;
    return r;
}

int cmd_certify(const RunConfig& cfg)
{
    SkewProduct m = make_map(cfg.map());
    Run r = start(cfg, &m);
    ClassCertificate cert = certify(m, make_certify_options(cfg.command()));
    write_json(r.out("certificate.json"), cert);
    r.manifest.grids = cert.grids;
    r.manifest.summary = {{"certified", cert.certified}, {"failure", cert.failure}, {"b0", cert.b0}};
    r.finish();
    if (!cert.certified) {
        std::cerr << "certification failed: " << cert.failure << "\n";
        return cert_failed;
    }
    std::cout << "certified: C=" << cert.C << " s=" << cert.s << " eps=" << cert.eps << " delta=" << cert.delta
              << " b0=" << cert.b0 << "\n";
    return ok;
}

int cmd_orbit(const RunConfig& cfg)
{
    const json& c = cfg.command();
    SkewProduct m = make_map(cfg.map());
    Run r = start(cfg, &m);
    BaseTrajectory base(m.b, make_x0(c.at("x0")));
    auto n = c.at("n").get<std::size_t>();
    OrbitRecord rec = iterate_orbit(m, base, CirclePoint(c.at("y0").get<double>()), n);
    CsvWriter w(r.out("orbit.csv"), {"j", "x", "y", "log_dy"});
    for (std::size_t j = 0; j < rec.points.size(); ++j) {
        auto [x, y] = rec.points[j];
        if (j < rec.log_dy.size()) w.row(j, x, y, rec.log_dy[j]);
        else w.row(j, x, y, std::string(""));
    }
    r.manifest.n = n;
    r.manifest.precision_bits = std::max(cfg.precision_bits(), base.precision_bits());
    r.manifest.summary = {{"steps", rec.steps()}};
    if (rec.singular_at) r.manifest.summary["singular_at"] = *rec.singular_at;
    r.finish();
    if (rec.singular_at) {
        std::cerr << "derivative singularity at step " << *rec.singular_at << "; orbit truncated\n";
        return numerical;
    }
    return ok;
}

int cmd_lyapunov(const RunConfig& cfg)
{
    const json& c = cfg.command();
    SkewProduct m = make_map(cfg.map());
    Run r = start(cfg, &m);
    BaseTrajectory base(m.b, make_x0(c.at("x0")));
    auto n = c.at("n").get<std::size_t>();
    LyapunovEstimate e =
        fibered_lyapunov(m, base, CirclePoint(c.at("y0").get<double>()), n, c.at("trace_points").get<std::size_t>());
    CsvWriter w(r.out("lyapunov_trace.csv"), {"j", "partial_avg"});
    for (auto [j, v] : e.partials) w.row(j, v);
    r.manifest.n = n;
    r.manifest.precision_bits = std::max(cfg.precision_bits(), base.precision_bits());
    r.manifest.summary = {{"estimate", e.value}, {"limsup_proxy", e.limsup_proxy}, {"steps", e.n}, {"truncated", e.truncated}};
    r.finish();
    std::cout << "fibered Lyapunov estimate " << fmt(e.value) << " over " << e.n << " steps\n";
    if (e.truncated) {
        std::cerr << "derivative singularity; estimate truncated at n = " << e.n << "\n";
        return numerical;
    }
    return ok;
}

int cmd_sync(const RunConfig& cfg)
{
    const json& c = cfg.command();
    SkewProduct m = make_map(cfg.map());
    Run r = start(cfg, &m);
    BaseTrajectory base(m.b, make_x0(c.at("x0")));
    auto n = c.at("n").get<std::size_t>();
    SyncRun s = run_sync(m, base, c.at("k").get<std::size_t>(), n);
    write_sync_csv(s, r.out("sync_points.csv"), r.out("sync.csv"));
    double tol = c.at("tolerance").get<double>();
    std::size_t settled = s.settled_below(tol);
    r.manifest.n = n;
    r.manifest.precision_bits = std::max(cfg.precision_bits(), s.precision_bits);
    r.manifest.summary = {{"final_diameter", s.diameter.back()}, {"tolerance", tol}};
    if (settled <= n) r.manifest.summary["settled_at"] = settled;
    r.finish();
    std::cout << "final diameter " << fmt(s.diameter.back()) << "\n";
    return ok;
}

int cmd_scatter(const RunConfig& cfg)
{
    const json& c = cfg.command();
    SkewProduct m = make_map(cfg.map());
    Run r = start(cfg, &m);
    BaseTrajectory base(m.b, make_x0(c.at("x0")));
    auto n = c.at("n").get<std::size_t>();
    ScatterRun s = orbit_scatter(m, base, CirclePoint(c.at("y0").get<double>()), n);
    write_scatter_csv(s, r.out("scatter.csv"));
    std::vector<double> xs;
    for (auto [x, y] : s.points) xs.push_back(x);
    Histogram h = uniform_histogram(xs, c.at("bins").get<std::size_t>());
    r.manifest.n = n;
    r.manifest.precision_bits = std::max(cfg.precision_bits(), s.precision_bits);
    r.manifest.summary = {{"max_bin_deviation", h.max_relative_deviation}};
    r.finish();
    return ok;
}

int cmd_audit(const RunConfig& cfg)
{
    const json& c = cfg.command();
    SkewProduct m = make_map(cfg.map());
    ClassCertificate cert = certify(m, make_certify_options(c));
    if (!cert.certified) {
        Run r = start(cfg, &m);
        write_json(r.out("certificate.json"), cert);
        r.finish();
        std::cerr << "certification failed: " << cert.failure << "\n";
        return cert_failed;
    }
    if (c.at("use_b0").get<bool>()) {
        if (cfg.map().at("family") != "additive") throw ValidationError("use_b0 needs the additive family");
        m = make_map(cfg.map(), cert.b0);
    }
    Run r = start(cfg, &m);
    write_json(r.out("certificate.json"), cert);

    AuditOptions opt;
    opt.depth = c.at("depth").get<std::size_t>();
    opt.grid_n = c.at("grid_n").get<std::size_t>();
    opt.work_budget = c.at("work_budget").get<std::uint64_t>();
    std::optional<AuditReport> resume;
    fs::path ckpt = c.contains("checkpoint") ? fs::path(c["checkpoint"].get<std::string>()) : r.dir / "audit.json";
    if (c.contains("checkpoint") && fs::exists(ckpt)) {
        std::ifstream in(ckpt);
        resume = json::parse(in).get<AuditReport>();
    }
    std::unique_ptr<CsvWriter> vw;
    VerdictSink sink;
    if (c.at("write_verdicts").get<bool>()) {
        vw = std::make_unique<CsvWriter>(r.out("verdicts.csv"), std::vector<std::string>{"word", "status", "margin"});
        sink = [&](const CylinderWord& w, const BadnessVerdict& v) { vw->row(w.str(), std::string(to_string(v.status)), v.margin); };
    }
    AuditReport rep = audit_partition(m, c.at("y0").get<double>(), cert.G, cert, opt, resume, sink);
    write_json(r.out("audit.json"), rep);
    r.manifest.grids = {{"grid_n", opt.grid_n}, {"depth", opt.depth}, {"work_budget", opt.work_budget}};
    r.manifest.summary = {{"b", m.b},
                          {"b0", cert.b0},
                          {"q", rep.q},
                          {"max_flagged_children", rep.max_flagged_children},
                          {"violations", rep.violations.size()},
                          {"complete", rep.complete}};
    r.finish();
    std::cout << "audit depth " << rep.depth << "/" << rep.target_depth << ": max bad+unknown children "
              << rep.max_flagged_children << " vs q = " << rep.q << (rep.below_b0 ? " (b below b0, not asserted)" : "")
              << "\n";
    if (!rep.below_b0 && !rep.violations.empty()) return cert_failed;
    return ok;
}

int cmd_schrodinger(const RunConfig& cfg)
{
    const json& c = cfg.command();
    SchrodingerParams p = make_schrodinger_params(cfg.map());
    SkewProduct m = schrodinger_projective(p);
    Run r = start(cfg, &m);
    BaseTrajectory base(p.b, make_x0(c.at("x0")));
    auto n = c.at("n").get<std::size_t>();
    IdentityCheck id = schrodinger_identity(p, base, CirclePoint(c.at("u0").get<double>()), n);
    json out = {{"fibered_lyapunov", id.fibered},
                {"max_lyapunov_sl2", id.max_lyapunov},
                {"tan_product", id.tan_product},
                {"identity_gap", id.gap},
                {"truncated", id.truncated},
                {"target_region", schrodinger_target_region(p.lambda)}};
    std::vector<double> lambdas = c.at("fit_lambdas").get<std::vector<double>>();
    if (!lambdas.empty()) {
        ExponentFit fit = fit_sublevel_exponent(lambdas, p.energy, p.b, c.at("u_samples").get<std::size_t>(),
                                                c.at("x_grid").get<std::size_t>());
        out["sublevel_fit"] = {{"lambdas", fit.lambdas},
                               {"longest_component", fit.longest},
                               {"max_components", fit.max_components},
                               {"beta", fit.beta},
                               {"certified", fit.certified}};
    }
    write_json(r.out("schrodinger.json"), out);
    r.manifest.n = n;
    r.manifest.precision_bits = std::max(cfg.precision_bits(), base.precision_bits());
    r.manifest.summary = out;
    r.finish();
    std::cout << "fibered " << fmt(id.fibered) << "  -2 x max Lyapunov " << fmt(-2.0 * id.max_lyapunov) << "  gap "
              << fmt(id.gap) << "\n";
    return id.truncated ? numerical : ok;
}

int cmd_figure1(const RunConfig& cfg)
{
    const json& c = cfg.command();
    SkewProduct m = make_map(cfg.map());
    Run r = start(cfg, &m);
    std::string panel = c.at("panel").get<std::string>();
    double eps = cfg.map().at("eps_tilde").get<double>();
    unsigned prec = cfg.precision_bits();
    if (panel != "right") {
        BaseTrajectory base(m.b, make_x0(c.at("x0")));
        SyncRun s = run_sync(m, base, c.at("k").get<std::size_t>(), c.at("n_left").get<std::size_t>());
        write_sync_csv(s, r.out("figure1_left.csv"), r.out("figure1_left_diameter.csv"));
        std::size_t settled = s.settled_below(1e-6);
        r.manifest.summary["left_final_diameter"] = s.diameter.back();
        if (settled <= s.n) r.manifest.summary["left_settled_below_1e-6_at"] = settled;
        prec = std::max(prec, s.precision_bits);
    }
    if (panel != "left") {
        BaseTrajectory base(m.b, make_x0(c.at("x0")));
        ScatterRun s = orbit_scatter(m, base, CirclePoint(c.at("y0").get<double>()), c.at("n_right").get<std::size_t>());
        write_scatter_csv(s, r.out("figure1_right.csv"));
        std::vector<double> xs;
        for (auto [x, y] : s.points) xs.push_back(x);
        Histogram h = uniform_histogram(xs, c.at("bins").get<std::size_t>());
        r.manifest.summary["right_max_bin_deviation"] = h.max_relative_deviation;
        prec = std::max(prec, s.precision_bits);
    }
    r.manifest.summary["eps_tilde"] = eps;
    r.manifest.precision_bits = prec;
    r.manifest.n = c.at("n_right").get<std::size_t>();
    r.finish();
    return ok;
}

int cmd_figure2(const RunConfig& cfg)
{
    const json& c = cfg.command();
    SkewProduct m = make_map(cfg.map());
    Run r = start(cfg, &m);
    Figure2 f = figure2(cfg.map().at("eps_tilde").get<double>(), c.at("samples").get<std::size_t>(),
                        c.at("grid_n").get<std::size_t>());
    write_figure2(f, r.out("figure2_curve.csv"), r.out("figure2_escape.csv"));
    r.manifest.grids = {{"grid_n", c.at("grid_n")}, {"samples", c.at("samples")}};
    r.manifest.summary = {{"G", f.G}, {"escape", f.escape}};
    r.finish();
    std::cout << "escape set: " << f.escape.components << " components, measure " << fmt(f.escape.measure) << "\n";
    return ok;
}

int cmd_survey(const RunConfig& cfg)
{
    const json& c = cfg.command();
    SkewProduct m = make_map(cfg.map());
    Run r = start(cfg, &m);
    auto n = c.at("n").get<std::size_t>();
    double thr = std::log(c.at("C").get<double>()) / 2.0;
    SurveyResult s = lyapunov_survey(m, c.at("samples").get<std::size_t>(), n, cfg.seed(), thr);
    CsvWriter w(r.out("survey.csv"), {"sample", "estimate"});
    for (std::size_t i = 0; i < s.estimates.size(); ++i) w.row(i, s.estimates[i]);
    r.manifest.n = n;
    r.manifest.precision_bits = 0;
    r.manifest.summary = {{"threshold", thr},
                          {"fraction_below", s.fraction_below},
                          {"max_estimate", s.max_estimate},
                          {"mean", s.mean}};
    r.finish();
    std::cout << "fraction below log(C)/2: " << fmt(s.fraction_below) << "\n";
    return ok;
}

int dispatch(const RunConfig& cfg)
{
    const std::string& s = cfg.subcommand;
    if (s == "certify") return cmd_certify(cfg);
    if (s == "orbit") return cmd_orbit(cfg);
    if (s == "lyapunov") return cmd_lyapunov(cfg);
    if (s == "sync") return cmd_sync(cfg);
    if (s == "scatter") return cmd_scatter(cfg);
    if (s == "audit-partition") return cmd_audit(cfg);
    if (s == "schrodinger") return cmd_schrodinger(cfg);
    if (s == "figure1") return cmd_figure1(cfg);
    if (s == "figure2") return cmd_figure2(cfg);
    return cmd_survey(cfg);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Skew-product torus maps: Lyapunov estimates, class certification and cylinder audits"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<long long> n_override;
    std::optional<unsigned> threads;
    bool print_config = false;

    for (const auto& name : subcommands()) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "JSON run config");
        sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
        sub->add_option("--seed", seed, "run seed (overrides seed)");
        sub->add_option("--n", n_override, "iteration count (overrides command.n)");
        sub->add_option("--threads", threads, "worker cap (fallback: FIBRESYNC_THREADS)");
        sub->add_flag("--print-config", print_config, "print the validated config and exit");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : invalid;
    }

    const std::string subname = app.get_subcommands().front()->get_name();
    try {
        json doc = json::object();
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw ValidationError("cannot read config " + config_path);
            doc = json::parse(in);
        }
        if (!out_dir.empty()) doc["output_dir"] = out_dir;
        if (seed) doc["seed"] = *seed;
        if (n_override) {
            if (!doc.contains("command")) doc["command"] = json::object();
            doc["command"]["n"] = *n_override;
        }
        if (threads) set_thread_count(*threads);

        RunConfig cfg = validate_config(subname, doc);
        if (print_config) {
            std::cout << cfg.doc.dump(2) << "\n";
            return ok;
        }
        return dispatch(cfg);
    } catch (const ConfigError& e) {
        for (const auto& err : e.errors) std::cerr << "config error: " << err << "\n";
        return invalid;
    } catch (const json::exception& e) {
        std::cerr << "invalid JSON: " << e.what() << "\n";
        return invalid;
    } catch (const ValidationError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return invalid;
    } catch (const CertificationError& e) {
        std::cerr << "certification failed: " << e.what() << "\n";
        return cert_failed;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return numerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return numerical;
    }
}
