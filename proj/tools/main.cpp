#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "bundle.hpp"
#include "config.hpp"
#include "saapde/errors.hpp"
#include "saapde/experiments.hpp"
#include "saapde/parallel.hpp"

namespace {

using namespace saapde;
using namespace saapde::cli;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitAcceptance = 3;

struct GlobalOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::size_t> threads;
    std::string out_dir;
    bool json = false;
};

RunConfig load(const GlobalOptions& g) {
    RunConfig cfg = load_config(g.config_path, g.overrides);
    if (!g.out_dir.empty()) cfg.output.directory = g.out_dir;
    return cfg;
}

std::size_t threads_for(const GlobalOptions& g, const RunConfig& cfg) {
    return resolve_threads(g.threads ? g.threads : cfg.threads);
}

std::vector<ProblemKind> problems_from(const std::string& name) {
    if (name == "all") return {ProblemKind::SemilinearAvar, ProblemKind::Bilinear};
    return {parse_problem_kind(name)};
}

void print_line(const char* label, double value) { fmt::print("{:<28} {}\n", label, format_real(value)); }

int cmd_config(const GlobalOptions& g) {
    const RunConfig cfg = load(g);
    if (g.json) fmt::print("{}\n", json{{"config_hash", config_hash(cfg)}, {"config", config_to_json(cfg)}}.dump(2));
    else fmt::print("{}\n", config_to_json(cfg).dump(2));
    return kExitOk;
}

int cmd_constants(const GlobalOptions& g) {
    const RunConfig cfg = load(g);
    const Model model(cfg.model);
    const ConstantsReport c = model.constants();
    if (g.json) {
        fmt::print("{}\n", json{{"config_hash", config_hash(cfg)}, {"constants", constants_json(c)}}.dump(2));
        return kExitOk;
    }
    fmt::print("config_hash {}\n", config_hash(cfg));
    print_line("C_D", c.friedrichs);
    print_line("C_H01_L4", c.h01_l4);
    print_line("lambda_min", c.lambda_min);
    print_line("delta", c.delta);
    print_line("guard_radius", c.guard_radius);
    print_line("kappa_min", c.kappa_min);
    print_line("kappa_max", c.kappa_max);
    print_line("g_max", c.g_max);
    print_line("b_max", c.b_max);
    print_line("r_ad", c.r_ad);
    print_line("c_S", c.c_state);
    print_line("c_z", c.c_adjoint);
    print_line("t_bound", c.t_bound);
    print_line("semilinear_gradient_bound", c.semilinear_gradient_bound);
    print_line("bilinear_value_bound", c.bilinear_value_bound);
    print_line("bilinear_gradient_bound", c.bilinear_gradient_bound);
    return kExitOk;
}

int cmd_gradcheck(const GlobalOptions& g) {
    const RunConfig cfg = load(g);
    const GradcheckReport r = gradcheck(cfg.model, cfg.gradcheck, threads_for(g, cfg));
    if (g.json) {
        json sweep = json::array();
        for (const auto& p : r.step_sweep) sweep.push_back({{"step", p.step}, {"rel_error", p.rel_error}});
        fmt::print("{}\n", json{{"config_hash", config_hash(cfg)},
                                {"semilinear_max_rel", r.semilinear_max_rel},
                                {"bilinear_max_rel", r.bilinear_max_rel},
                                {"avar_u_max_rel", r.avar_u_max_rel},
                                {"avar_t_max_abs", r.avar_t_max_abs},
                                {"zero_direction_max", r.zero_direction_max},
                                {"checks", r.checks},
                                {"threshold", r.threshold},
                                {"passed", r.passed()},
                                {"v_shaped", r.v_shaped()},
                                {"step_sweep", sweep}}
                               .dump(2));
    } else {
        fmt::print("config_hash {}\n", config_hash(cfg));
        print_line("semilinear max rel error", r.semilinear_max_rel);
        print_line("bilinear max rel error", r.bilinear_max_rel);
        print_line("avar u max rel error", r.avar_u_max_rel);
        print_line("avar t max abs error", r.avar_t_max_abs);
        print_line("zero direction max", r.zero_direction_max);
        fmt::print("{:<28} {}\n", "checks", r.checks);
        fmt::print("step sweep{}:\n", r.v_shaped() ? " (V-shaped)" : "");
        for (const auto& p : r.step_sweep) fmt::print("  h={:<8g} rel_error={}\n", p.step, format_real(p.rel_error));
        fmt::print("{} (threshold {})\n", r.passed() ? "PASS" : "FAIL", format_real(r.threshold));
    }
    return r.passed() ? kExitOk : kExitAcceptance;
}

struct SolveCommand {
    std::string problem;
    std::optional<std::size_t> n;
    std::optional<std::uint64_t> seed;
    std::optional<int> level;
    std::optional<double> eps;
    bool reference = false;
};

int cmd_solve(const GlobalOptions& g, const SolveCommand& o) {
    const RunConfig cfg = load(g);
    const ProblemKind kind = parse_problem_kind(o.problem);
    const std::size_t threads = threads_for(g, cfg);
    auto model = std::make_shared<const Model>(cfg.model);

    ScenarioSet scen;
    if (o.level) {
        if (o.seed) throw ValidationError("--seed has no meaning with --level-quad");
        scen = quadrature(cfg.model.fields, *o.level);
        if (o.n && *o.n != scen.size())
            throw ValidationError(fmt::format("--N {} does not match the {} points of quadrature level {}", *o.n,
                                              scen.size(), *o.level));
    } else {
        if (!o.n) throw ValidationError("solve needs --N (Monte Carlo) or --level-quad");
        scen = monte_carlo(cfg.model.fields, o.seed.value_or(cfg.sweep.seed_base), *o.n);
    }
    const double eps = o.eps.value_or(cfg.sweep.eps(scen.size()));

    std::optional<Experiment> experiment;
    StationaryPoint p;
    if (o.reference) {
        experiment.emplace(model, cfg.solver, cfg.sweep, threads);
        p = experiment->solve_on(kind, scen, eps, threads);
    } else {
        const auto f = model->objective(kind, scen, threads);
        p = solve(*f, cfg.solver.to_config(eps), model->default_start(kind));
    }

    json out{{"config_hash", config_hash(cfg)},
             {"problem", to_string(kind)},
             {"N", scen.size()},
             {"eps", eps},
             {"converged", p.converged},
             {"iterations", p.iterations},
             {"objective", p.objective},
             {"residual", p.residual},
             {"t", p.t ? json(*p.t) : json(nullptr)},
             {"lipschitz", p.lipschitz},
             {"gamma_probe", p.gamma_probe},
             {"u_l2", l2_norm(p.u)}};
    if (o.level) out["level"] = *o.level;
    else out["seed"] = o.seed.value_or(cfg.sweep.seed_base);
    if (experiment) out["dist_to_ref"] = experiment->distance_to_reference(kind, p);
    if (g.json) {
        fmt::print("{}\n", out.dump(2));
    } else {
        for (const auto& [k, v] : out.items()) fmt::print("{:<14} {}\n", k, v.dump());
    }
    return p.converged ? kExitOk : kExitNumerical;
}

struct SweepCommand {
    std::string problem = "all";
    bool check = false;
};

int cmd_sweep(const GlobalOptions& g, const SweepCommand& o, bool monte_carlo_sweep) {
    const RunConfig cfg = load(g);
    const std::size_t threads = threads_for(g, cfg);
    auto model = std::make_shared<const Model>(cfg.model);
    SweepSettings sweep = cfg.sweep;
    sweep.emit_wall_time = cfg.output.emit_wall_time;
    const Experiment ex(model, cfg.solver, sweep, threads);
    const std::string_view kind = monte_carlo_sweep ? "sweep-mc" : "sweep-quad";

    bool ok = true;
    for (ProblemKind problem : problems_from(o.problem)) {
        const Reference& ref = ex.reference(problem);
        const std::vector<SweepRecord> records =
            monte_carlo_sweep ? ex.run_mc_sweep(problem) : ex.run_quadrature_sweep(problem);
        const BundlePaths paths = write_bundle(cfg, kind, problem, ref, records, model->constants());
        fmt::print("{} {}: {} records -> {}\n", kind, to_string(problem), records.size(), paths.csv.string());
        fmt::print("{} {}: summary -> {}\n", kind, to_string(problem), paths.summary.string());
        if (!o.check) continue;
        if (monte_carlo_sweep) {
            const TrendReport t = analyse_trend(records, sweep.bootstrap_resamples, sweep.bootstrap_seed);
            const bool pass = t.ratio_last_first <= 0.5 && t.non_increasing;
            fmt::print("{} {}: median ratio {} trend {} -> {}\n", kind, to_string(problem),
                       format_real(t.ratio_last_first), t.non_increasing ? "non-increasing" : "increasing",
                       pass ? "PASS" : "FAIL");
            ok = ok && pass;
        } else {
            const bool pass = quadrature_trend_ok(records);
            fmt::print("{} {}: distances {} in level -> {}\n", kind, to_string(problem),
                       pass ? "non-increasing" : "not monotone", pass ? "PASS" : "FAIL");
            ok = ok && pass;
        }
    }
    return ok ? kExitOk : kExitAcceptance;
}

struct ReportCommand {
    std::vector<std::string> bundles;
    std::string expect_hash;
};

int cmd_report(const GlobalOptions& g, const ReportCommand& o) {
    std::string expected = o.expect_hash;
    if (expected.empty() && (!g.config_path.empty() || !g.overrides.empty())) expected = config_hash(load(g));

    std::vector<LoadedBundle> bundles;
    for (const auto& path : o.bundles) bundles.push_back(load_bundle(path));
    for (const auto& b : bundles) {
        const std::string& want = expected.empty() ? bundles.front().hash : expected;
        if (b.hash != want)
            throw ValidationError(fmt::format("bundle '{}' has config hash {}, expected {}", b.summary_path.string(),
                                              b.hash, want));
    }

    for (const auto& b : bundles) {
        const json& s = b.summary;
        fmt::print("{} {} (config {}, {} records)\n", s["sweep"].get<std::string>(), s["problem"].get<std::string>(),
                   b.hash, b.rows.size());
        if (s.contains("constants")) {
            const json& c = s["constants"];
            fmt::print("  C_D={} kappa_min={} t_bound={}\n", c.value("C_D", 0.0), c.value("kappa_min", 0.0),
                       c.value("t_bound", 0.0));
        }
        // Statistics are recomputed from the record table.
        std::vector<SweepRecord> records;
        for (const auto& row : b.rows) {
            if (row.size() < 9) throw ValidationError(fmt::format("malformed record row in '{}'", b.summary_path.string()));
            SweepRecord r;
            r.n = std::stoull(row[1]);
            if (!row[2].empty()) r.seed = std::stoull(row[2]);
            r.ok = !row[6].empty();
            if (r.ok) r.dist_to_ref = std::stod(row[6]);
            records.push_back(std::move(r));
        }
        fmt::print("  {:>8} {:>6} {:>24} {:>24} {:>24}\n", "N", "count", "median_dist", "q25", "q75");
        for (const auto& st : distance_statistics(records))
            fmt::print("  {:>8} {:>6} {:>24} {:>24} {:>24}\n", st.n, st.count, format_real(st.median),
                       format_real(st.q25), format_real(st.q75));
        if (s.contains("slope_loglog") && !s["slope_loglog"].is_null())
            fmt::print("  slope_loglog {}\n", format_real(s["slope_loglog"].get<double>()));
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sample average approximation of PDE-constrained stochastic optimization problems"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions g;
    app.add_option("--config", g.config_path, "JSON config file (defaults apply when omitted)")->check(CLI::ExistingFile);
    app.add_option("--set", g.overrides, "Override a config key, e.g. --set sweep.seeds=4")
        ->expected(1)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    app.add_option("--threads", g.threads, "Worker cap (fallback: SAA_PDE_THREADS, then hardware)")
        ->check(CLI::PositiveNumber);
    app.add_option("--out", g.out_dir, "Output directory (overrides output.directory)");
    app.add_flag("--json", g.json, "Machine-readable output");

    auto* config = app.add_subcommand("config", "Print the effective configuration");
    auto* constants = app.add_subcommand("constants", "Print the constants of the a priori bounds");
    auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of all gradients");

    SolveCommand so;
    auto* solve_cmd = app.add_subcommand("solve", "Solve one SAA or quadrature problem");
    solve_cmd->add_option("--problem", so.problem, "semilinear-avar or bilinear")->required();
    solve_cmd->add_option("--N", so.n, "Monte Carlo sample size");
    solve_cmd->add_option("--seed", so.seed, "Monte Carlo stream seed");
    solve_cmd->add_option("--level-quad", so.level, "Tensor Gauss-Legendre level instead of Monte Carlo");
    solve_cmd->add_option("--eps", so.eps, "Stationarity tolerance (default eps0/sqrt(N))");
    solve_cmd->add_flag("--reference", so.reference, "Use the reference step and report the distance to it");

    SweepCommand mc, qd;
    auto* mc_cmd = app.add_subcommand("sweep-mc", "Monte Carlo consistency sweep");
    mc_cmd->add_option("--problem", mc.problem, "semilinear-avar, bilinear or all");
    mc_cmd->add_flag("--check", mc.check, "Exit 3 unless the median trend passes");
    auto* qd_cmd = app.add_subcommand("sweep-quad", "Quadrature-level consistency sweep");
    qd_cmd->add_option("--problem", qd.problem, "semilinear-avar, bilinear or all");
    qd_cmd->add_flag("--check", qd.check, "Exit 3 unless distances are non-increasing in level");

    ReportCommand ro;
    auto* report = app.add_subcommand("report", "Re-render summaries of stored bundles");
    report->add_option("bundles", ro.bundles, "Summary JSON files")->required()->check(CLI::ExistingFile);
    report->add_option("--expect-hash", ro.expect_hash, "Refuse bundles with a different config hash");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (*config) return cmd_config(g);
        if (*constants) return cmd_constants(g);
        if (*grad) return cmd_gradcheck(g);
        if (*solve_cmd) return cmd_solve(g, so);
        if (*mc_cmd) return cmd_sweep(g, mc, true);
        if (*qd_cmd) return cmd_sweep(g, qd, false);
        if (*report) return cmd_report(g, ro);
    } catch (const ValidationError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kExitValidation;
    } catch (const NumericalError& e) {
        fmt::print(stderr, "numerical failure: {}\n", e.what());
        return kExitNumerical;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kExitNumerical;
    }
    return kExitValidation;
}
