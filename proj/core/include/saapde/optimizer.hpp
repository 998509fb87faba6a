#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "saapde/risk.hpp"

namespace saapde {

enum class TUpdate { Exact, JointProx };

struct SolverConfig {
    /// Initial step; 0 estimates 1/L from secant power iteration at u0.
    double step = 0.0;
    bool backtracking = true;
    std::size_t max_iterations = 5000;
    double tol = 1e-6;  // stationarity target
    /// Step used to measure the stationarity residual; 0 uses the initial step.
    double gamma_probe = 0.0;
    TUpdate t_update = TUpdate::Exact;
    /// Scenarios used by the Lipschitz estimate (the leading ones).
    std::size_t lipschitz_scenarios = 8;
    std::size_t power_iterations = 8;
    std::uint64_t seed = 1;

    void validate() const;
};

struct StationaryPoint {
    GridFunction u;
    std::optional<double> t;
    double residual = 0.0;
    double objective = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    double gamma_probe = 0.0;
    double lipschitz = 0.0;  // estimate used for the initial step
    ScenarioProvenance provenance;
};

/// ||u - prox(u - gamma g_u)|| / gamma + dist(0, t-slot); the t-term only when
/// `with_t`.
double stationarity_residual(const SubgradientElement& g, const GridFunction& u, const RegularizerSpec& reg,
                             double gamma_probe, bool with_t);
/// Residual of an evaluation that already carries its gradient.
double stationarity_residual(const SaaObjective& f, const Evaluation& e, double gamma_probe);

/// Secant power-iteration estimate of the gradient Lipschitz constant at u
/// (t frozen for AVaR).
double estimate_lipschitz(const SaaObjective& f, const GridFunction& u, std::size_t iterations,
                          std::uint64_t seed);

/// Proximal gradient iteration u+ = prox(u - gamma g_u); with exact t-updates
/// t is re-minimised at every iterate. Stops when the residual at gamma_probe
/// is at most cfg.tol; otherwise returns the last iterate flagged as not
/// converged. u0 must lie in the box.
StationaryPoint solve(const SaaObjective& f, const SolverConfig& cfg, const GridFunction& u0,
                      std::optional<double> t0 = std::nullopt);

/// L2 distance of the controls plus |t - t'| when both carry t.
double point_distance(const StationaryPoint& a, const StationaryPoint& b);

/// Single-linkage clustering: points closer than tol_cluster share a cluster,
/// transitively, so the cluster count can only drop as tol_cluster grows.
/// Returns the lowest-objective member of each cluster (first one on ties),
/// ordered by the first input index in each cluster.
std::vector<StationaryPoint> multistart_cluster(const std::vector<StationaryPoint>& points, double tol_cluster);

/// Start points for multistart: u0 followed by count-1 nodewise uniform draws
/// in the box.
std::vector<GridFunction> start_points(const RegularizerSpec& reg, const GridFunction& u0, std::size_t count,
                                       std::uint64_t seed);

}  // namespace saapde
