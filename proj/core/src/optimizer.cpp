#include "saapde/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "saapde/errors.hpp"

namespace saapde {

namespace {

constexpr double kMinStepFraction = 1e-12;

double armijo_slack(double value) { return 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(value)); }

}  // namespace

void SolverConfig::validate() const {
    if (!(step >= 0.0) || !std::isfinite(step)) throw ValidationError("solver step must be non-negative (0: estimate)");
    if (!(tol > 0.0)) throw ValidationError("stationarity tolerance must be positive");
    if (!(gamma_probe >= 0.0) || !std::isfinite(gamma_probe)) throw ValidationError("gamma_probe must be non-negative");
    if (max_iterations == 0) throw ValidationError("iteration cap must be positive");
    if (lipschitz_scenarios == 0 || power_iterations == 0)
        throw ValidationError("Lipschitz estimate needs at least one scenario and one iteration");
}

double stationarity_residual(const SubgradientElement& g, const GridFunction& u, const RegularizerSpec& reg,
                             double gamma_probe, bool with_t) {
    if (!(gamma_probe > 0.0)) throw ValidationError("gamma_probe must be positive");
    GridFunction step = u;
    for (std::size_t k = 0; k < step.size(); ++k) step[k] -= gamma_probe * g.g_u[k];
    const double prox_part = l2_norm(u - reg.prox(step, gamma_probe)) / gamma_probe;
    return prox_part + (with_t ? g.t_interval.distance(0.0) : 0.0);
}

double stationarity_residual(const SaaObjective& f, const Evaluation& e, double gamma_probe) {
    if (!e.has_gradient) throw ValidationError("evaluation carries no gradient");
    return stationarity_residual(e.sub, e.u, f.regularizer(), gamma_probe, f.has_t());
}

double estimate_lipschitz(const SaaObjective& f, const GridFunction& u, std::size_t iterations, std::uint64_t seed) {
    Evaluation base = f.evaluate(u);
    const std::optional<double> t = base.t;
    f.add_gradient(base);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    GridFunction v(u.grid(), Layout::AllNodes);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = normal(rng);
    v *= 1.0 / l2_norm(v);

    const double s = 1e-4 * std::max(1.0, l2_norm(u));
    double lipschitz = 0.0;
    for (std::size_t it = 0; it < iterations; ++it) {
        GridFunction probe = u;
        for (std::size_t k = 0; k < probe.size(); ++k) probe[k] += s * v[k];
        const Evaluation e = f.evaluate_with_gradient(probe, t);
        GridFunction d = e.sub.g_u - base.sub.g_u;
        const double norm = l2_norm(d) / s;
        if (!(norm > 0.0)) break;
        lipschitz = norm;
        v = std::move(d);
        v *= 1.0 / l2_norm(v);
    }
    if (!(lipschitz > 0.0) || !std::isfinite(lipschitz))
        throw NumericalError("could not estimate a gradient Lipschitz constant");
    return lipschitz;
}

StationaryPoint solve(const SaaObjective& f, const SolverConfig& cfg, const GridFunction& u0,
                      std::optional<double> t0) {
    cfg.validate();
    const RegularizerSpec& reg = f.regularizer();
    if (u0.grid() != f.grid() || u0.layout() != Layout::AllNodes)
        throw ValidationError("start point must be an all-node grid function on the problem grid");
    if (!reg.contains(u0)) throw ValidationError("start point violates the box constraint");
    const bool joint = f.has_t() && cfg.t_update == TUpdate::JointProx;
    if (t0 && !f.has_t()) throw ValidationError("t0 given for a problem without t");

    StationaryPoint out;
    out.provenance = f.scenarios().provenance();
    if (cfg.step > 0.0) {
        out.lipschitz = 1.0 / cfg.step;
    } else {
        const std::size_t k = std::min(cfg.lipschitz_scenarios, f.scenarios().size());
        out.lipschitz = estimate_lipschitz(*f.restricted(k), u0, cfg.power_iterations, cfg.seed);
    }
    const double gamma0 = 1.0 / out.lipschitz;
    out.gamma_probe = cfg.gamma_probe > 0.0 ? cfg.gamma_probe : gamma0;

    Evaluation e = f.evaluate(u0, joint ? t0 : std::optional<double>{});
    f.add_gradient(e);

    double gamma = gamma0;
    std::size_t it = 0;
    for (;;) {
        const double residual = stationarity_residual(f, e, out.gamma_probe);
        out.residual = residual;
        if (residual <= cfg.tol) {
            out.converged = true;
            break;
        }
        if (it == cfg.max_iterations) break;

        bool accepted = false;
        Evaluation next;
        while (!accepted) {
            GridFunction v = e.u;
            for (std::size_t k = 0; k < v.size(); ++k) v[k] -= gamma * e.sub.g_u[k];
            GridFunction u_new = reg.prox(v, gamma);
            std::optional<double> t_new;
            double dt = 0.0;
            if (joint) {
                t_new = *e.t - gamma * e.sub.t_selected;
                dt = *t_new - *e.t;
            }
            next = f.evaluate(u_new, t_new);
            if (!cfg.backtracking) break;
            const GridFunction du = u_new - e.u;
            const double dn = l2_norm(du);
            const double model = e.smooth + l2_inner(e.sub.g_u, du) + (joint ? e.sub.t_selected * dt : 0.0) +
                                 (dn * dn + dt * dt) / (2.0 * gamma);
            if (next.smooth <= model + armijo_slack(e.smooth)) {
                accepted = true;
            } else {
                gamma *= 0.5;
                if (gamma < kMinStepFraction * gamma0) break;
            }
        }
        if (cfg.backtracking && !accepted) break;  // step collapsed: report the current point
        f.add_gradient(next);
        e = std::move(next);
        ++it;
        gamma = std::min(2.0 * gamma, gamma0);
    }
    out.u = e.u;
    out.t = e.t;
    out.objective = e.total();
    out.iterations = it;
    return out;
}

double point_distance(const StationaryPoint& a, const StationaryPoint& b) {
    double d = l2_norm(a.u - b.u);
    if (a.t && b.t) d += std::abs(*a.t - *b.t);
    return d;
}

std::vector<StationaryPoint> multistart_cluster(const std::vector<StationaryPoint>& points, double tol_cluster) {
    if (!(tol_cluster > 0.0)) throw ValidationError("cluster tolerance must be positive");
    const std::size_t n = points.size();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (point_distance(points[i], points[j]) <= tol_cluster) {
                const std::size_t a = find(i), b = find(j);
                if (a != b) parent[std::max(a, b)] = std::min(a, b);
            }
    // Roots are the smallest index in each cluster, so scanning in index order
    // yields clusters by first member.
    std::vector<std::size_t> best(n, n);
    std::vector<std::size_t> roots;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = find(i);
        if (best[r] == n) {
            best[r] = i;
            roots.push_back(r);
        } else if (points[i].objective < points[best[r]].objective) {
            best[r] = i;
        }
    }
    std::vector<StationaryPoint> reps;
    reps.reserve(roots.size());
    for (std::size_t r : roots) reps.push_back(points[best[r]]);
    return reps;
}

std::vector<GridFunction> start_points(const RegularizerSpec& reg, const GridFunction& u0, std::size_t count,
                                       std::uint64_t seed) {
    std::vector<GridFunction> starts;
    if (count == 0) return starts;
    starts.push_back(u0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t s = 1; s < count; ++s) {
        GridFunction u(u0.grid(), Layout::AllNodes);
        for (std::size_t k = 0; k < u.size(); ++k)
            u[k] = reg.lower()[k] + unit(rng) * (reg.upper()[k] - reg.lower()[k]);
        starts.push_back(std::move(u));
    }
    return starts;
}

}  // namespace saapde
