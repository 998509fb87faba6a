#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "saapde/bilinear.hpp"
#include "saapde/optimizer.hpp"
#include "saapde/risk.hpp"
#include "saapde/semilinear.hpp"

namespace saapde {

enum class ProblemKind { SemilinearAvar, Bilinear };

std::string_view to_string(ProblemKind kind);
ProblemKind parse_problem_kind(std::string_view name);

struct SemilinearSettings {
    double target_amplitude = 1.0;
    double lower = -20.0;
    double upper = 20.0;
    double alpha = 1e-3;
    AvarOptions avar;
    NewtonOptions newton;
};

struct BilinearSettings {
    double target_amplitude = 1.0;
    double cap = 10.0;  // constant upper bound of U_ad
    double alpha = 1e-2;
    double guard_safety = 0.9;
};

struct ModelSettings {
    int n = 16;
    FieldSpec fields = FieldSpec::defaults(4, 50.0, 0.25);
    SemilinearSettings semilinear;
    BilinearSettings bilinear;
    SolveOptions linear;

    void validate() const;
};

/// Every constant of the a priori bounds, as printed by `saapde constants`.
struct ConstantsReport {
    double friedrichs = 0.0;
    double h01_l4 = 0.0;
    double lambda_min = 0.0;
    double kappa_min = 0.0;
    double kappa_max = 0.0;
    double g_max = 0.0;
    double b_max = 0.0;
    double delta = 0.0;
    double guard_radius = 0.0;
    double r_ad = 0.0;
    double c_state = 0.0;
    double c_adjoint = 0.0;
    double t_bound = 0.0;
    double semilinear_gradient_bound = 0.0;
    double bilinear_value_bound = 0.0;
    double bilinear_gradient_bound = 0.0;
};

/// Grid, both PDE problems and their regularisers, built once per run.
class Model {
public:
    explicit Model(ModelSettings settings);

    const ModelSettings& settings() const noexcept { return settings_; }
    const GridPtr& grid() const noexcept { return grid_; }
    const GridConstants& grid_constants() const noexcept { return constants_; }
    const std::shared_ptr<const SemilinearProblem>& semilinear() const noexcept { return semilinear_; }
    const std::shared_ptr<const BilinearProblem>& bilinear() const noexcept { return bilinear_; }
    const RegularizerSpec& regularizer(ProblemKind kind) const noexcept;
    const SemilinearBounds& semilinear_bounds() const noexcept { return semilinear_bounds_; }

    std::unique_ptr<SaaObjective> objective(ProblemKind kind, ScenarioSet scenarios, std::size_t threads = 1) const;
    /// Zero control projected into the box.
    GridFunction default_start(ProblemKind kind) const;
    ConstantsReport constants() const;

private:
    ModelSettings settings_;
    GridPtr grid_;
    GridConstants constants_;
    std::shared_ptr<const SemilinearProblem> semilinear_;
    std::shared_ptr<const BilinearProblem> bilinear_;
    RegularizerSpec semilinear_reg_;
    RegularizerSpec bilinear_reg_;
    SemilinearBounds semilinear_bounds_;
};

struct SweepSettings {
    std::vector<std::size_t> sample_sizes{8, 16, 32, 64, 128, 256, 512, 1024};
    std::size_t seeds = 16;
    std::uint64_t seed_base = 1;
    double eps0 = 1e-5;  // eps_N = eps0 / sqrt(N)
    std::size_t reference_n = 4096;
    std::uint64_t reference_seed = 1'000'003;
    double reference_eps = 1e-10;
    std::size_t reference_starts = 3;
    std::uint64_t start_seed = 17;
    double cluster_tol = 1e-3;
    std::vector<int> quadrature_levels{1, 2, 3, 4, 5};
    std::size_t bootstrap_resamples = 200;
    std::uint64_t bootstrap_seed = 2022;
    bool emit_wall_time = false;

    void validate() const;
    std::uint64_t seed(std::size_t replicate) const { return seed_base + replicate; }
    double eps(std::size_t n) const;
};

/// Solver settings shared by every solve of a run; the step and probe step are
/// filled in from the reference problem so residuals are comparable.
struct SolverSettings {
    std::size_t max_iterations = 5000;
    TUpdate t_update = TUpdate::Exact;
    std::size_t lipschitz_scenarios = 8;
    std::size_t power_iterations = 8;
    std::uint64_t lipschitz_seed = 1;
    double step = 0.0;  // 0: estimate on the reference problem

    void validate() const;
    /// Solver configuration with stationarity target `tol`; a positive gamma
    /// fixes both the step and the probe step.
    SolverConfig to_config(double tol, double gamma = 0.0) const;
};

struct Reference {
    ProblemKind kind = ProblemKind::SemilinearAvar;
    ScenarioProvenance provenance;
    std::vector<StationaryPoint> representatives;
    std::size_t starts = 0;
    std::size_t failed_starts = 0;
    double gamma = 0.0;  // common step and probe step of the run
};

struct SweepRecord {
    ProblemKind problem = ProblemKind::SemilinearAvar;
    std::size_t n = 0;                   // scenario count
    std::optional<std::uint64_t> seed;   // Monte Carlo only
    std::optional<int> level;            // quadrature only
    double eps = 0.0;
    bool ok = false;                     // solve finished without an exception
    bool converged = false;
    double objective = 0.0;
    double residual = 0.0;
    std::optional<double> t;
    double dist_to_ref = 0.0;
    double ref_residual = 0.0;
    double wall_ms = 0.0;
    std::size_t iterations = 0;
    std::string error;
};

/// Drives references, sweeps and the gradient battery for one model.
class Experiment {
public:
    Experiment(std::shared_ptr<const Model> model, SolverSettings solver, SweepSettings sweep,
               std::size_t threads = 1);

    const Model& model() const noexcept { return *model_; }
    const SweepSettings& sweep_settings() const noexcept { return sweep_; }
    std::size_t threads() const noexcept { return threads_; }

    /// Multistart at reference_n with eps = reference_eps, clustered. Cached.
    const Reference& reference(ProblemKind kind) const;
    /// Objective of the reference problem (for reference residuals).
    const SaaObjective& reference_objective(ProblemKind kind) const;

    SolverConfig solver_config(ProblemKind kind, double eps) const;
    /// Single solve on an arbitrary scenario set from the default start.
    StationaryPoint solve_on(ProblemKind kind, const ScenarioSet& scenarios, double eps,
                             std::size_t threads) const;

    std::vector<SweepRecord> run_mc_sweep(ProblemKind kind) const;
    std::vector<SweepRecord> run_quadrature_sweep(ProblemKind kind) const;

    /// Distance of a point to the nearest reference representative.
    double distance_to_reference(ProblemKind kind, const StationaryPoint& p) const;

private:
    SweepRecord evaluate_cell(ProblemKind kind, const ScenarioSet& scenarios, double eps) const;
    SolverConfig config_with(double gamma, double eps) const;

    std::shared_ptr<const Model> model_;
    SolverSettings solver_;
    SweepSettings sweep_;
    std::size_t threads_;

    struct ReferenceSlot {
        std::once_flag once;
        std::unique_ptr<SaaObjective> objective;         // threaded, for the multistart
        std::unique_ptr<SaaObjective> serial_objective;  // for residuals inside sweep cells
        Reference reference;
    };
    const ReferenceSlot& slot(ProblemKind kind) const;

    mutable ReferenceSlot slots_[2];
};

struct NStatistics {
    std::size_t n = 0;
    std::size_t count = 0;
    double median = 0.0;
    double q25 = 0.0;
    double q75 = 0.0;
};

/// Median distance trend across sample sizes with paired bootstrap standard
/// errors of adjacent median differences.
struct TrendReport {
    std::vector<NStatistics> per_n;
    std::vector<double> diff_se;  // size per_n.size() - 1
    double slope_loglog = 0.0;
    double ratio_last_first = 0.0;
    /// No adjacent median increase larger than one standard error.
    bool non_increasing = false;
};

/// Per-N median/quartiles of dist_to_ref over the records that finished.
std::vector<NStatistics> distance_statistics(const std::vector<SweepRecord>& records);
TrendReport analyse_trend(const std::vector<SweepRecord>& records, std::size_t resamples, std::uint64_t seed);
/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);
/// Number of adjacent increases larger than tol.
std::size_t count_inversions(const std::vector<double>& values, double tol);
/// Quadrature distances in level order: every record finished and at most
/// one adjacent increase beyond 1e-6.
bool quadrature_trend_ok(const std::vector<SweepRecord>& records);
/// Linear-interpolation quantile (type 7) of unsorted data.
double quantile(std::vector<double> data, double q);

/// CSV with columns problem,N,seed,objective,residual,t_value,dist_to_ref,
/// ref_residual,wall_ms. Values use 17 significant digits; wall_ms is left
/// empty unless requested so that repeated runs are byte-identical.
void write_sweep_csv(std::ostream& out, const std::vector<SweepRecord>& records, bool emit_wall_time);
std::string sweep_csv(const std::vector<SweepRecord>& records, bool emit_wall_time);
/// RFC 4180 field quoting.
std::string csv_escape(std::string_view field);
/// Shortest round-trip-safe rendering with 17 significant digits.
std::string format_real(double value);

struct GradcheckSettings {
    int n = 16;
    std::size_t directions = 10;
    std::size_t scenarios = 8;
    std::size_t points = 3;
    double step = 1e-5;
    double threshold = 1e-4;
    std::uint64_t seed = 7;
    std::vector<double> step_sweep{1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9};

    void validate() const;
};

struct StepSweepPoint {
    double step = 0.0;
    double rel_error = 0.0;
};

struct GradcheckReport {
    double semilinear_max_rel = 0.0;
    double bilinear_max_rel = 0.0;
    double avar_u_max_rel = 0.0;
    double avar_t_max_abs = 0.0;
    double zero_direction_max = 0.0;
    std::size_t checks = 0;
    std::vector<StepSweepPoint> step_sweep;  // semilinear, first point/scenario/direction
    double threshold = 0.0;

    double max_rel() const;
    bool passed() const;
    /// Errors first decrease and later increase along the step sweep.
    bool v_shaped() const;
};

/// Central finite differences against adjoint gradients for both PDE models
/// and the off-kink AVaR subgradient, at gc.n (other settings from the model).
GradcheckReport gradcheck(const ModelSettings& model, const GradcheckSettings& gc, std::size_t threads = 1);

/// Control points used by the gradient battery: zero (projected), a smooth
/// interior field and a nodewise random field in the box.
std::vector<GridFunction> battery_points(const RegularizerSpec& reg, std::size_t count, std::uint64_t seed);
/// Parameter battery: xi = 0 first, then Monte Carlo draws of `seed`.
std::vector<ParamVector> battery_parameters(std::size_t count, std::size_t m_xi, std::uint64_t seed);

}  // namespace saapde
