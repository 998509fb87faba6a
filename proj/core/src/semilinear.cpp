#include "saapde/semilinear.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "saapde/errors.hpp"

namespace saapde {

namespace {

double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

SemilinearProblem::SemilinearProblem(GridPtr grid, FieldSpec spec, GridFunction target, NewtonOptions newton,
                                     SolveOptions linear)
    : grid_(std::move(grid)),
      sampler_(std::move(spec), grid_),
      target_(std::move(target)),
      newton_(newton),
      linear_(linear) {
    if (target_.grid() != grid_ || target_.layout() != Layout::Interior)
        throw ValidationError("target must be an interior grid function on the problem grid");
    if (!target_.all_finite()) throw ValidationError("target contains non-finite values");
    if (!(newton_.tol > 0.0)) throw ValidationError("Newton tolerance must be positive");
    if (newton_.max_iterations == 0) throw ValidationError("Newton iteration cap must be positive");
}

GridFunction SemilinearProblem::default_target(const GridPtr& grid, double amplitude) {
    GridFunction yd(grid, Layout::Interior);
    for (std::size_t k = 0; k < yd.size(); ++k) {
        const auto x = grid->node_coords(grid->node_of_interior(k));
        yd[k] = amplitude * std::sin(std::numbers::pi * x[0]) * std::sin(std::numbers::pi * x[1]);
    }
    return yd;
}

SparseOperator SemilinearProblem::stiffness(const ParamVector& xi) const {
    return assemble_stiffness(*grid_, CellField(grid_, sampler_.kappa_cells(xi)));
}

std::vector<double> SemilinearProblem::load(const GridFunction& u, const ParamVector& xi) const {
    if (u.grid() != grid_ || u.layout() != Layout::AllNodes)
        throw ValidationError("control must be an all-node grid function on the problem grid");
    if (!u.all_finite()) throw ValidationError("control contains non-finite values");
    const std::vector<double> b = sampler_.load_nodes(xi);
    const auto mass = grid_->lumped_mass_interior();
    std::vector<double> f(grid_->interior_count());
    for (std::size_t k = 0; k < f.size(); ++k) {
        const std::size_t node = grid_->node_of_interior(k);
        f[k] = mass[k] * (u[node] + b[node]);
    }
    return f;
}

std::vector<double> SemilinearProblem::residual(const GridFunction& u, const ParamVector& xi,
                                                const GridFunction& y) const {
    const SparseOperator a = stiffness(xi);
    std::vector<double> r = a * y.values();
    const std::vector<double> f = load(u, xi);
    const auto mass = grid_->lumped_mass_interior();
    for (std::size_t k = 0; k < r.size(); ++k) r[k] += mass[k] * y[k] * y[k] * y[k] - f[k];
    return r;
}

GridFunction SemilinearProblem::solve_linear_state(const GridFunction& u, const ParamVector& xi) const {
    const SparseOperator a = stiffness(xi);
    return GridFunction(grid_, Layout::Interior, solve_spd(a, load(u, xi), linear_).x);
}

GridFunction SemilinearProblem::solve_state(const GridFunction& u, const ParamVector& xi,
                                            NewtonReport* report) const {
    const SparseOperator a = stiffness(xi);
    const std::vector<double> f = load(u, xi);
    const auto mass = grid_->lumped_mass_interior();
    const std::size_t m = f.size();
    const double tol = newton_.tol * std::max(1.0, norm2(f));

    std::vector<double> y = solve_spd(a, f, linear_).x;
    std::vector<double> r(m), trial(m), r_trial(m), jac_diag(m), step(m);
    auto eval_residual = [&](const std::vector<double>& yy, std::vector<double>& out) {
        a.multiply(yy, out);
        for (std::size_t k = 0; k < m; ++k) out[k] += mass[k] * yy[k] * yy[k] * yy[k] - f[k];
        return norm2(out);
    };
    auto newton_step = [&](const std::vector<double>& yy, const std::vector<double>& res) {
        for (std::size_t k = 0; k < m; ++k) jac_diag[k] = 3.0 * mass[k] * yy[k] * yy[k];
        step = solve_spd(a.plus_diagonal(jac_diag), res, linear_).x;
        for (double& s : step) s = -s;
    };

    double rnorm = eval_residual(y, r);
    NewtonReport local;
    local.residual_history.push_back(rnorm);
    std::size_t it = 0;
    while (rnorm > tol) {
        if (it == newton_.max_iterations)
            throw NonConvergenceError(
                fmt::format("Newton did not converge in {} iterations (residual {:.3e}, target {:.3e})",
                            newton_.max_iterations, rnorm, tol),
                rnorm);
        newton_step(y, r);
        double lambda = 1.0;
        for (;;) {
            for (std::size_t k = 0; k < m; ++k) trial[k] = y[k] + lambda * step[k];
            const double tnorm = eval_residual(trial, r_trial);
            if (tnorm <= (1.0 - 1e-4 * lambda) * rnorm) {
                y.swap(trial);
                r.swap(r_trial);
                rnorm = tnorm;
                break;
            }
            lambda *= newton_.backtrack_factor;
            if (lambda < newton_.min_damping)
                throw NonConvergenceError(
                    fmt::format("Newton damping fell below {:.3e} at residual {:.3e}", newton_.min_damping, rnorm),
                    rnorm);
        }
        ++it;
        local.residual_history.push_back(rnorm);
    }
    if (newton_.polish && rnorm > 0.0) {
        newton_step(y, r);
        for (std::size_t k = 0; k < m; ++k) trial[k] = y[k] + step[k];
        const double tnorm = eval_residual(trial, r_trial);
        if (tnorm <= rnorm) {
            y.swap(trial);
            local.residual_history.push_back(tnorm);
        }
    }
    local.iterations = it;
    if (report) *report = std::move(local);
    return GridFunction(grid_, Layout::Interior, std::move(y));
}

SparseOperator SemilinearProblem::adjoint_operator(const ParamVector& xi, const GridFunction& y) const {
    const auto mass = grid_->lumped_mass_interior();
    std::vector<double> d(y.size());
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = 3.0 * mass[k] * y[k] * y[k];
    return stiffness(xi).plus_diagonal(d);
}

GridFunction SemilinearProblem::solve_adjoint(const GridFunction& u, const ParamVector& xi,
                                              const GridFunction& y) const {
    (void)u;  // the adjoint depends on u only through y
    const auto mass = grid_->lumped_mass_interior();
    std::vector<double> rhs(y.size());
    for (std::size_t k = 0; k < rhs.size(); ++k) rhs[k] = -mass[k] * (y[k] - target_[k]);
    return GridFunction(grid_, Layout::Interior, solve_spd(adjoint_operator(xi, y), rhs, linear_).x);
}

double SemilinearProblem::objective(const GridFunction& y) const {
    const double d = l2_norm(y - target_);
    return 0.5 * d * d;
}

double SemilinearProblem::value(const GridFunction& u, const ParamVector& xi) const {
    return objective(solve_state(u, xi));
}

GridFunction SemilinearProblem::gradient_from_adjoint(const GridFunction& z) const {
    GridFunction g = z.to_all_nodes();
    g *= -1.0;
    return g;
}

ValueGradient SemilinearProblem::grad_Jhat(const GridFunction& u, const ParamVector& xi) const {
    const GridFunction y = solve_state(u, xi);
    const GridFunction z = solve_adjoint(u, xi, y);
    return {objective(y), gradient_from_adjoint(z)};
}

SemilinearBounds semilinear_bounds(double friedrichs, const FieldSpec& spec, double b_max, double r_ad,
                                   double target_norm) {
    SemilinearBounds s;
    s.friedrichs = friedrichs;
    s.kappa_min = spec.kappa_min();
    s.b_max = b_max;
    s.r_ad = r_ad;
    s.target_norm = target_norm;
    const double cd = friedrichs;
    s.c_state = cd / s.kappa_min * (r_ad + 1.0) + cd * b_max / s.kappa_min;
    s.c_adjoint = cd * cd / s.kappa_min * s.c_state + cd / s.kappa_min * target_norm;
    s.value_bound = cd * cd * s.c_state * s.c_state + target_norm * target_norm;
    return s;
}

}  // namespace saapde
