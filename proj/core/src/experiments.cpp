#include "saapde/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "saapde/errors.hpp"
#include "saapde/parallel.hpp"

namespace saapde {

namespace {

std::size_t index_of(ProblemKind kind) { return kind == ProblemKind::SemilinearAvar ? 0 : 1; }

double relative_error(double fd, double ad) {
    const double scale = std::max(std::abs(fd), std::abs(ad));
    return scale > 0.0 ? std::abs(fd - ad) / scale : 0.0;
}

GridFunction axpy(const GridFunction& u, double s, const GridFunction& d) {
    GridFunction out = u;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += s * d[k];
    return out;
}

std::vector<GridFunction> unit_directions(const GridPtr& grid, std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::vector<GridFunction> dirs;
    for (std::size_t i = 0; i < count; ++i) {
        GridFunction d(grid, Layout::AllNodes);
        for (std::size_t k = 0; k < d.size(); ++k) d[k] = normal(rng);
        d *= 1.0 / l2_norm(d);
        dirs.push_back(std::move(d));
    }
    return dirs;
}

double median_of(std::vector<double> v) { return quantile(std::move(v), 0.5); }

}  // namespace

std::string_view to_string(ProblemKind kind) {
    return kind == ProblemKind::SemilinearAvar ? "semilinear-avar" : "bilinear";
}

ProblemKind parse_problem_kind(std::string_view name) {
    if (name == "semilinear-avar" || name == "semilinear") return ProblemKind::SemilinearAvar;
    if (name == "bilinear") return ProblemKind::Bilinear;
    throw ValidationError(fmt::format("unknown problem '{}' (expected semilinear-avar or bilinear)", name));
}

void ModelSettings::validate() const {
    if (n < 2) throw ValidationError("grid needs n >= 2 cells per side");
    fields.validate();
    const auto& s = semilinear;
    if (!(s.lower <= s.upper) || !std::isfinite(s.lower) || !std::isfinite(s.upper))
        throw ValidationError("semilinear box needs finite bounds with lower <= upper");
    if (!(s.alpha > 0.0) || !(bilinear.alpha > 0.0)) throw ValidationError("alpha must be positive");
    if (!(s.avar.beta > 0.0 && s.avar.beta < 1.0)) throw ValidationError("beta must lie in (0, 1)");
    if (!(bilinear.cap >= 0.0) || !std::isfinite(bilinear.cap))
        throw ValidationError("bilinear control cap must be finite and non-negative");
    if (!(bilinear.guard_safety > 0.0 && bilinear.guard_safety <= 1.0))
        throw ValidationError("guard safety factor must be in (0, 1]");
    if (!std::isfinite(s.target_amplitude) || !std::isfinite(bilinear.target_amplitude))
        throw ValidationError("target amplitude must be finite");
    if (!(linear.tol > 0.0)) throw ValidationError("linear solver tolerance must be positive");
}

Model::Model(ModelSettings settings)
    : settings_((settings.validate(), std::move(settings))),
      grid_(make_grid(settings_.n)),
      constants_(estimate_constants(*grid_)),
      semilinear_(std::make_shared<SemilinearProblem>(
          grid_, settings_.fields, SemilinearProblem::default_target(grid_, settings_.semilinear.target_amplitude),
          settings_.semilinear.newton, settings_.linear)),
      bilinear_(std::make_shared<BilinearProblem>(
          grid_, settings_.fields, SemilinearProblem::default_target(grid_, settings_.bilinear.target_amplitude),
          constant_field(grid_, Layout::AllNodes, settings_.bilinear.cap), settings_.linear,
          settings_.bilinear.guard_safety, constants_)),
      semilinear_reg_(RegularizerSpec::box(grid_, settings_.semilinear.lower, settings_.semilinear.upper,
                                           settings_.semilinear.alpha)),
      bilinear_reg_(RegularizerSpec::box(grid_, 0.0, settings_.bilinear.cap, settings_.bilinear.alpha)),
      semilinear_bounds_(saapde::semilinear_bounds(constants_.friedrichs, settings_.fields,
                                                   settings_.fields.b_max(*grid_), semilinear_reg_.radius(),
                                                   l2_norm(semilinear_->target()))) {}

const RegularizerSpec& Model::regularizer(ProblemKind kind) const noexcept {
    return kind == ProblemKind::SemilinearAvar ? semilinear_reg_ : bilinear_reg_;
}

std::unique_ptr<SaaObjective> Model::objective(ProblemKind kind, ScenarioSet scenarios, std::size_t threads) const {
    if (kind == ProblemKind::SemilinearAvar)
        return std::make_unique<AvarSaaProblem>(semilinear_, std::move(scenarios), semilinear_reg_,
                                                settings_.semilinear.avar, threads);
    return std::make_unique<BilinearSaaProblem>(bilinear_, std::move(scenarios), bilinear_reg_, threads);
}

GridFunction Model::default_start(ProblemKind kind) const {
    return regularizer(kind).project(GridFunction(grid_, Layout::AllNodes));
}

ConstantsReport Model::constants() const {
    ConstantsReport c;
    c.friedrichs = constants_.friedrichs;
    c.h01_l4 = constants_.h01_l4;
    c.lambda_min = constants_.lambda_min;
    c.kappa_min = settings_.fields.kappa_min();
    c.kappa_max = settings_.fields.kappa_max();
    c.g_max = settings_.fields.g_max();
    c.b_max = semilinear_bounds_.b_max;
    const BilinearBounds& bb = bilinear_->bounds();
    c.delta = bb.delta;
    c.guard_radius = bb.guard_radius;
    c.r_ad = semilinear_bounds_.r_ad;
    c.c_state = semilinear_bounds_.c_state;
    c.c_adjoint = semilinear_bounds_.c_adjoint;
    c.t_bound = semilinear_bounds_.value_bound;
    c.semilinear_gradient_bound = semilinear_bounds_.gradient_bound();
    c.bilinear_value_bound = bb.value_bound();
    c.bilinear_gradient_bound = bb.gradient_bound();
    return c;
}

// ---------------------------------------------------------------------------

void SweepSettings::validate() const {
    if (sample_sizes.size() < 2) throw ValidationError("a sweep needs at least two sample sizes");
    for (std::size_t i = 0; i < sample_sizes.size(); ++i) {
        if (sample_sizes[i] == 0) throw ValidationError("sample sizes must be positive");
        if (i > 0 && sample_sizes[i] <= sample_sizes[i - 1])
            throw ValidationError("sample sizes must be strictly increasing");
    }
    if (seeds == 0) throw ValidationError("a sweep needs at least one seed");
    if (reference_n <= sample_sizes.back())
        throw ValidationError(fmt::format("reference size {} must exceed the largest sweep size {}", reference_n,
                                          sample_sizes.back()));
    if (!(eps0 > 0.0) || !(reference_eps > 0.0)) throw ValidationError("tolerances must be positive");
    if (reference_starts == 0) throw ValidationError("reference needs at least one start");
    if (!(cluster_tol > 0.0)) throw ValidationError("cluster tolerance must be positive");
    for (int level : quadrature_levels)
        if (level < 1) throw ValidationError("quadrature levels must be at least 1");
    if (bootstrap_resamples < 2) throw ValidationError("bootstrap needs at least two resamples");
}

double SweepSettings::eps(std::size_t n) const { return eps0 / std::sqrt(static_cast<double>(n)); }

void SolverSettings::validate() const {
    if (max_iterations == 0) throw ValidationError("iteration cap must be positive");
    if (lipschitz_scenarios == 0 || power_iterations == 0)
        throw ValidationError("Lipschitz estimate needs at least one scenario and one iteration");
    if (!(step >= 0.0) || !std::isfinite(step)) throw ValidationError("solver step must be non-negative");
}

Experiment::Experiment(std::shared_ptr<const Model> model, SolverSettings solver, SweepSettings sweep,
                       std::size_t threads)
    : model_(std::move(model)), solver_(solver), sweep_(std::move(sweep)), threads_(std::max<std::size_t>(threads, 1)) {
    solver_.validate();
    sweep_.validate();
}

SolverConfig SolverSettings::to_config(double tol, double gamma) const {
    SolverConfig cfg;
    cfg.step = gamma > 0.0 ? gamma : step;
    cfg.gamma_probe = gamma;
    cfg.tol = tol;
    cfg.max_iterations = max_iterations;
    cfg.t_update = t_update;
    cfg.lipschitz_scenarios = lipschitz_scenarios;
    cfg.power_iterations = power_iterations;
    cfg.seed = lipschitz_seed;
    return cfg;
}

SolverConfig Experiment::config_with(double gamma, double eps) const { return solver_.to_config(eps, gamma); }

const Experiment::ReferenceSlot& Experiment::slot(ProblemKind kind) const {
    ReferenceSlot& s = slots_[index_of(kind)];
    std::call_once(s.once, [&] {
        const Model& m = *model_;
        const ScenarioSet scen = monte_carlo(m.settings().fields, sweep_.reference_seed, sweep_.reference_n);
        s.objective = m.objective(kind, scen, threads_);
        s.serial_objective = m.objective(kind, scen, 1);
        Reference& ref = s.reference;
        ref.kind = kind;
        ref.provenance = scen.provenance();
        const GridFunction u0 = m.default_start(kind);
        if (solver_.step > 0.0) {
            ref.gamma = solver_.step;
        } else {
            const std::size_t k = std::min(solver_.lipschitz_scenarios, scen.size());
            ref.gamma = 1.0 / estimate_lipschitz(*s.objective->restricted(k), u0, solver_.power_iterations,
                                                 solver_.lipschitz_seed);
        }
        const SolverConfig cfg = config_with(ref.gamma, sweep_.reference_eps);
        const auto starts = start_points(m.regularizer(kind), u0, sweep_.reference_starts, sweep_.start_seed);
        std::vector<StationaryPoint> good;
        for (const GridFunction& start : starts) {
            ++ref.starts;
            try {
                StationaryPoint p = solve(*s.objective, cfg, start);
                if (p.converged) {
                    good.push_back(std::move(p));
                    continue;
                }
            } catch (const NumericalError&) {
            }
            ++ref.failed_starts;
        }
        if (good.empty())
            throw NumericalError(fmt::format("no reference start reached the tolerance {:.1e} for {}",
                                             sweep_.reference_eps, to_string(kind)));
        ref.representatives = multistart_cluster(good, sweep_.cluster_tol);
    });
    if (!s.objective) throw NumericalError("reference construction failed earlier");
    return s;
}

const Reference& Experiment::reference(ProblemKind kind) const { return slot(kind).reference; }

const SaaObjective& Experiment::reference_objective(ProblemKind kind) const { return *slot(kind).objective; }

SolverConfig Experiment::solver_config(ProblemKind kind, double eps) const {
    return config_with(reference(kind).gamma, eps);
}

StationaryPoint Experiment::solve_on(ProblemKind kind, const ScenarioSet& scenarios, double eps,
                                     std::size_t threads) const {
    const auto f = model_->objective(kind, scenarios, threads);
    return solve(*f, solver_config(kind, eps), model_->default_start(kind));
}

double Experiment::distance_to_reference(ProblemKind kind, const StationaryPoint& p) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : reference(kind).representatives) best = std::min(best, point_distance(p, r));
    return best;
}

SweepRecord Experiment::evaluate_cell(ProblemKind kind, const ScenarioSet& scenarios, double eps) const {
    SweepRecord rec;
    rec.problem = kind;
    rec.n = scenarios.size();
    rec.eps = eps;
    const auto start = std::chrono::steady_clock::now();
    try {
        const StationaryPoint p = solve_on(kind, scenarios, eps, 1);
        rec.converged = p.converged;
        rec.objective = p.objective;
        rec.residual = p.residual;
        rec.t = p.t;
        rec.iterations = p.iterations;
        rec.dist_to_ref = distance_to_reference(kind, p);
        const ReferenceSlot& s = slot(kind);
        const Evaluation e = s.serial_objective->evaluate_with_gradient(p.u, p.t);
        rec.ref_residual = stationarity_residual(*s.serial_objective, e, s.reference.gamma);
        rec.ok = true;
    } catch (const std::exception& ex) {
        rec.ok = false;
        rec.error = ex.what();
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

std::vector<SweepRecord> Experiment::run_mc_sweep(ProblemKind kind) const {
    slot(kind);
    struct Cell {
        std::size_t n;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (std::size_t n : sweep_.sample_sizes)
        for (std::size_t r = 0; r < sweep_.seeds; ++r) cells.push_back({n, sweep_.seed(r)});
    std::vector<SweepRecord> records(cells.size());
    const FieldSpec& fields = model_->settings().fields;
    parallel_for(cells.size(), threads_, [&](std::size_t i) {
        records[i] = evaluate_cell(kind, monte_carlo(fields, cells[i].seed, cells[i].n), sweep_.eps(cells[i].n));
        records[i].seed = cells[i].seed;
    });
    return records;
}

std::vector<SweepRecord> Experiment::run_quadrature_sweep(ProblemKind kind) const {
    slot(kind);
    const std::vector<int>& levels = sweep_.quadrature_levels;
    std::vector<SweepRecord> records(levels.size());
    const FieldSpec& fields = model_->settings().fields;
    parallel_for(levels.size(), threads_, [&](std::size_t i) {
        const ScenarioSet scen = quadrature(fields, levels[i]);
        records[i] = evaluate_cell(kind, scen, sweep_.eps(scen.size()));
        records[i].level = levels[i];
    });
    return records;
}

// ---------------------------------------------------------------------------

double quantile(std::vector<double> data, double q) {
    if (data.empty()) throw ValidationError("quantile of empty data");
    std::sort(data.begin(), data.end());
    const double pos = q * static_cast<double>(data.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, data.size() - 1);
    return data[lo] + (pos - static_cast<double>(lo)) * (data[hi] - data[lo]);
}

std::size_t count_inversions(const std::vector<double>& values, double tol) {
    std::size_t count = 0;
    for (std::size_t i = 0; i + 1 < values.size(); ++i)
        if (values[i + 1] - values[i] > tol) ++count;
    return count;
}

bool quadrature_trend_ok(const std::vector<SweepRecord>& records) {
    std::vector<const SweepRecord*> sorted;
    for (const auto& r : records) {
        if (!r.ok || !r.level) return false;
        sorted.push_back(&r);
    }
    std::sort(sorted.begin(), sorted.end(), [](const SweepRecord* a, const SweepRecord* b) { return *a->level < *b->level; });
    std::vector<double> d;
    for (const SweepRecord* r : sorted) d.push_back(r->dist_to_ref);
    return count_inversions(d, 1e-6) <= 1;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ValidationError("slope needs at least two matched points");
    double mx = 0.0, my = 0.0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw ValidationError("log-log slope needs positive data");
        mx += std::log(x[i]) / n;
        my += std::log(y[i]) / n;
    }
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

std::vector<NStatistics> distance_statistics(const std::vector<SweepRecord>& records) {
    std::vector<std::size_t> sizes;
    for (const auto& r : records)
        if (r.ok) sizes.push_back(r.n);
    std::sort(sizes.begin(), sizes.end());
    sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
    std::vector<NStatistics> out;
    for (std::size_t n : sizes) {
        std::vector<double> d;
        for (const auto& r : records)
            if (r.ok && r.n == n) d.push_back(r.dist_to_ref);
        out.push_back({n, d.size(), quantile(d, 0.5), quantile(d, 0.25), quantile(d, 0.75)});
    }
    return out;
}

TrendReport analyse_trend(const std::vector<SweepRecord>& records, std::size_t resamples, std::uint64_t seed) {
    TrendReport rep;
    rep.per_n = distance_statistics(records);
    const std::size_t k = rep.per_n.size();
    if (k < 2) throw ValidationError("trend analysis needs at least two sample sizes");

    // Replicates are paired across N through their seed.
    std::vector<std::uint64_t> seeds;
    for (const auto& r : records)
        if (r.seed) seeds.push_back(*r.seed);
    std::sort(seeds.begin(), seeds.end());
    seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());
    if (seeds.empty()) throw ValidationError("trend analysis needs seeded records");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::vector<double>> table(k, std::vector<double>(seeds.size(), nan));
    for (const auto& r : records) {
        if (!r.ok || !r.seed) continue;
        const auto ni = static_cast<std::size_t>(
            std::find_if(rep.per_n.begin(), rep.per_n.end(), [&](const NStatistics& s) { return s.n == r.n; }) -
            rep.per_n.begin());
        const auto si = static_cast<std::size_t>(std::lower_bound(seeds.begin(), seeds.end(), *r.seed) - seeds.begin());
        table[ni][si] = r.dist_to_ref;
    }

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, seeds.size() - 1);
    std::vector<std::vector<double>> diffs(k - 1);
    std::vector<std::size_t> idx(seeds.size());
    for (std::size_t b = 0; b < resamples; ++b) {
        for (auto& i : idx) i = pick(rng);
        std::vector<double> med(k, nan);
        for (std::size_t ni = 0; ni < k; ++ni) {
            std::vector<double> v;
            for (std::size_t i : idx)
                if (!std::isnan(table[ni][i])) v.push_back(table[ni][i]);
            if (!v.empty()) med[ni] = median_of(std::move(v));
        }
        for (std::size_t ni = 0; ni + 1 < k; ++ni)
            if (!std::isnan(med[ni]) && !std::isnan(med[ni + 1])) diffs[ni].push_back(med[ni + 1] - med[ni]);
    }
    rep.non_increasing = true;
    for (std::size_t ni = 0; ni + 1 < k; ++ni) {
        const auto& d = diffs[ni];
        double mean = 0.0, var = 0.0;
        for (double x : d) mean += x / static_cast<double>(d.size());
        for (double x : d) var += (x - mean) * (x - mean);
        const double se = d.size() > 1 ? std::sqrt(var / static_cast<double>(d.size() - 1)) : 0.0;
        rep.diff_se.push_back(se);
        if (rep.per_n[ni + 1].median - rep.per_n[ni].median > se) rep.non_increasing = false;
    }
    std::vector<double> xs, ys;
    for (const auto& s : rep.per_n) {
        xs.push_back(static_cast<double>(s.n));
        ys.push_back(s.median);
    }
    rep.ratio_last_first = ys.back() / ys.front();
    bool positive = std::all_of(ys.begin(), ys.end(), [](double y) { return y > 0.0; });
    rep.slope_loglog = positive ? loglog_slope(xs, ys) : std::numeric_limits<double>::quiet_NaN();
    return rep;
}

// ---------------------------------------------------------------------------

std::string format_real(double value) { return fmt::format("{:.17g}", value); }

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRecord>& records, bool emit_wall_time) {
    std::vector<const SweepRecord*> sorted;
    for (const auto& r : records) sorted.push_back(&r);
    std::stable_sort(sorted.begin(), sorted.end(), [](const SweepRecord* a, const SweepRecord* b) {
        if (a->n != b->n) return a->n < b->n;
        return a->seed.value_or(0) < b->seed.value_or(0);
    });
    out << "problem,N,seed,objective,residual,t_value,dist_to_ref,ref_residual,wall_ms\r\n";
    for (const SweepRecord* r : sorted) {
        std::string line = csv_escape(to_string(r->problem));
        line += fmt::format(",{},{}", r->n, r->seed ? std::to_string(*r->seed) : std::string());
        if (r->ok) {
            line += "," + format_real(r->objective) + "," + format_real(r->residual) + ",";
            if (r->t) line += format_real(*r->t);
            line += "," + format_real(r->dist_to_ref) + "," + format_real(r->ref_residual);
        } else {
            line += ",,,,,";
        }
        line += ",";
        if (emit_wall_time) line += format_real(r->wall_ms);
        out << line << "\r\n";
    }
}

std::string sweep_csv(const std::vector<SweepRecord>& records, bool emit_wall_time) {
    std::ostringstream os;
    write_sweep_csv(os, records, emit_wall_time);
    return os.str();
}

// ---------------------------------------------------------------------------

void GradcheckSettings::validate() const {
    if (n < 2) throw ValidationError("gradient check grid needs n >= 2");
    if (directions == 0 || scenarios == 0 || points == 0)
        throw ValidationError("gradient check needs directions, scenarios and points");
    if (!(step > 0.0) || !(threshold > 0.0)) throw ValidationError("gradient check step and threshold must be positive");
    for (double h : step_sweep)
        if (!(h > 0.0)) throw ValidationError("step sweep entries must be positive");
}

double GradcheckReport::max_rel() const {
    return std::max({semilinear_max_rel, bilinear_max_rel, avar_u_max_rel, avar_t_max_abs, zero_direction_max});
}

bool GradcheckReport::passed() const { return max_rel() <= threshold; }

bool GradcheckReport::v_shaped() const {
    if (step_sweep.size() < 3) return false;
    const auto best = std::min_element(step_sweep.begin(), step_sweep.end(),
                                       [](const StepSweepPoint& a, const StepSweepPoint& b) {
                                           return a.rel_error < b.rel_error;
                                       });
    if (best == step_sweep.begin() || best + 1 == step_sweep.end()) return false;
    for (auto it = step_sweep.begin(); it != best; ++it)
        if (!(it->rel_error > (it + 1)->rel_error)) return false;
    return step_sweep.back().rel_error > best->rel_error;
}

std::vector<GridFunction> battery_points(const RegularizerSpec& reg, std::size_t count, std::uint64_t seed) {
    const GridPtr& grid = reg.lower().grid();
    std::vector<GridFunction> pts;
    if (count == 0) return pts;
    pts.push_back(reg.project(GridFunction(grid, Layout::AllNodes)));
    if (count >= 2) {
        GridFunction u(grid, Layout::AllNodes);
        for (std::size_t k = 0; k < u.size(); ++k) {
            const auto x = grid->node_coords(k);
            const double mid = 0.5 * (reg.lower()[k] + reg.upper()[k]);
            const double half = 0.5 * (reg.upper()[k] - reg.lower()[k]);
            u[k] = mid + 0.8 * half * std::sin(2.0 * std::numbers::pi * x[0]) * std::cos(std::numbers::pi * x[1]);
        }
        pts.push_back(reg.project(u));
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    while (pts.size() < count) {
        GridFunction u(grid, Layout::AllNodes);
        for (std::size_t k = 0; k < u.size(); ++k)
            u[k] = reg.lower()[k] + unit(rng) * (reg.upper()[k] - reg.lower()[k]);
        pts.push_back(std::move(u));
    }
    return pts;
}

std::vector<ParamVector> battery_parameters(std::size_t count, std::size_t m_xi, std::uint64_t seed) {
    std::vector<ParamVector> out;
    if (count == 0) return out;
    out.push_back(ParamVector::zero(m_xi));
    for (std::size_t i = 0; out.size() < count; ++i) out.push_back(draw_parameter(seed, i, m_xi));
    return out;
}

GradcheckReport gradcheck(const ModelSettings& settings, const GradcheckSettings& gc, std::size_t threads) {
    gc.validate();
    ModelSettings ms = settings;
    ms.n = gc.n;
    const Model model(ms);
    const GridPtr& grid = model.grid();
    const auto params = battery_parameters(gc.scenarios, ms.fields.m_xi, gc.seed);
    const auto dirs = unit_directions(grid, gc.directions, gc.seed + 1);
    const auto sem_pts = battery_points(model.regularizer(ProblemKind::SemilinearAvar), gc.points, gc.seed + 2);
    const auto bil_pts = battery_points(model.regularizer(ProblemKind::Bilinear), gc.points, gc.seed + 3);
    const SemilinearProblem& sem = *model.semilinear();
    const BilinearProblem& bil = *model.bilinear();
    const double h = gc.step;

    GradcheckReport rep;
    rep.threshold = gc.threshold;
    const std::size_t cells = gc.points * params.size();
    std::vector<double> sem_err(cells, 0.0), bil_err(cells, 0.0), zero_err(cells, 0.0);
    parallel_for(cells, threads, [&](std::size_t c) {
        const GridFunction& us = sem_pts[c / params.size()];
        const GridFunction& ub = bil_pts[c / params.size()];
        const ParamVector& xi = params[c % params.size()];
        const GridFunction gs = sem.grad_Jhat(us, xi).grad;
        const GridFunction gb = bil.grad_p(ub, xi).grad;
        for (const GridFunction& d : dirs) {
            const double fd_s = (sem.value(axpy(us, h, d), xi) - sem.value(axpy(us, -h, d), xi)) / (2.0 * h);
            sem_err[c] = std::max(sem_err[c], relative_error(fd_s, l2_inner(gs, d)));
            const double fd_b = (bil.value(axpy(ub, h, d), xi) - bil.value(axpy(ub, -h, d), xi)) / (2.0 * h);
            bil_err[c] = std::max(bil_err[c], relative_error(fd_b, l2_inner(gb, d)));
        }
        const GridFunction zero(grid, Layout::AllNodes);
        zero_err[c] = std::max(std::abs(l2_inner(gs, zero)), std::abs(l2_inner(gb, zero)));
    });
    rep.semilinear_max_rel = *std::max_element(sem_err.begin(), sem_err.end());
    rep.bilinear_max_rel = *std::max_element(bil_err.begin(), bil_err.end());
    rep.zero_direction_max = *std::max_element(zero_err.begin(), zero_err.end());
    rep.checks = 2 * cells * dirs.size();

    // AVaR subgradient away from kinks: t at the midpoint of a flat minimiser
    // interval keeps every scenario off the kink.
    std::vector<Scenario> sc;
    for (const auto& xi : params) sc.push_back({xi, 1.0 / static_cast<double>(params.size())});
    const AvarSaaProblem avar(model.semilinear(), ScenarioSet(std::move(sc), {}),
                              model.regularizer(ProblemKind::SemilinearAvar), ms.semilinear.avar, threads);
    for (const GridFunction& u : sem_pts) {
        Evaluation e = avar.evaluate_with_gradient(u);
        const double t = *e.t;
        for (const GridFunction& d : dirs) {
            const double fd = (avar.evaluate(axpy(u, h, d), t).smooth - avar.evaluate(axpy(u, -h, d), t).smooth) /
                              (2.0 * h);
            rep.avar_u_max_rel = std::max(rep.avar_u_max_rel, relative_error(fd, l2_inner(e.sub.g_u, d)));
            ++rep.checks;
        }
        const double fd_t = (avar.evaluate(u, t + h).smooth - avar.evaluate(u, t - h).smooth) / (2.0 * h);
        rep.avar_t_max_abs = std::max(rep.avar_t_max_abs, std::abs(fd_t - e.sub.t_selected));
        ++rep.checks;
    }

    for (double step : gc.step_sweep) {
        const GridFunction& u = sem_pts.front();
        const ParamVector& xi = params.front();
        const GridFunction& d = dirs.front();
        const double ad = l2_inner(sem.grad_Jhat(u, xi).grad, d);
        const double fd = (sem.value(axpy(u, step, d), xi) - sem.value(axpy(u, -step, d), xi)) / (2.0 * step);
        rep.step_sweep.push_back({step, relative_error(fd, ad)});
    }
    return rep;
}

}  // namespace saapde
