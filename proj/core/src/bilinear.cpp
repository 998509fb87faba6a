#include "saapde/bilinear.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "saapde/errors.hpp"

namespace saapde {

GridFunction constant_field(const GridPtr& grid, Layout layout, double value) {
    return GridFunction(grid, layout, std::vector<double>(grid->size(layout), value));
}

BilinearProblem::BilinearProblem(GridPtr grid, FieldSpec spec, GridFunction target, GridFunction upper,
                                 SolveOptions linear, double guard_safety, std::optional<GridConstants> constants)
    : grid_(std::move(grid)),
      sampler_(std::move(spec), grid_),
      target_(std::move(target)),
      upper_(std::move(upper)),
      linear_(linear),
      unit_stiffness_(assemble_unit_stiffness(*grid_)) {
    if (target_.grid() != grid_ || target_.layout() != Layout::Interior)
        throw ValidationError("target must be an interior grid function on the problem grid");
    if (upper_.grid() != grid_ || upper_.layout() != Layout::AllNodes)
        throw ValidationError("control cap must be an all-node grid function on the problem grid");
    for (double v : upper_.values())
        if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("control cap must be finite and non-negative");
    if (!(guard_safety > 0.0 && guard_safety <= 1.0)) throw ValidationError("guard safety factor must be in (0, 1]");

    const GridConstants c = constants ? *constants : estimate_constants(*grid_);
    const FieldSpec& s = sampler_.spec();
    bounds_.friedrichs = c.friedrichs;
    bounds_.h01_l4 = c.h01_l4;
    bounds_.kappa_min = s.kappa_min();
    bounds_.g_max = s.g_max();
    bounds_.b_max = s.b_max(*grid_);
    bounds_.target_norm = l2_norm(target_);
    bounds_.delta = bounds_.kappa_min / (2.0 * bounds_.g_max * c.h01_l4 * c.h01_l4);
    bounds_.guard_radius = guard_safety * bounds_.delta;
}

double BilinearProblem::distance_to_admissible(const GridFunction& u) const {
    if (u.grid() != grid_ || u.layout() != Layout::AllNodes)
        throw ValidationError("control must be an all-node grid function on the problem grid");
    const auto mass = grid_->lumped_mass_all();
    double s = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        const double d = u[k] - std::clamp(u[k], 0.0, upper_[k]);
        s += mass[k] * d * d;
    }
    return std::sqrt(s);
}

void BilinearProblem::check_neighborhood(const GridFunction& u) const {
    if (!u.all_finite()) throw ValidationError("control contains non-finite values");
    const double d = distance_to_admissible(u);
    if (!(d < bounds_.guard_radius))
        throw OutOfNeighborhoodError(
            fmt::format("control is {:.3e} away from the admissible set; well-posedness is only "
                        "guaranteed within {:.3e}",
                        d, bounds_.guard_radius),
            d, bounds_.guard_radius);
}

std::vector<double> BilinearProblem::reaction_weights(const ParamVector& xi) const {
    const std::vector<double> g = sampler_.g_cells(xi);
    const double third = grid_->cell_area() / 3.0;
    std::vector<double> w(grid_->interior_count(), 0.0);
    const auto cells = grid_->cells();
    for (std::size_t c = 0; c < cells.size(); ++c) {
        for (std::size_t node : cells[c].nodes) {
            const auto k = grid_->interior_index(node);
            if (k >= 0) w[static_cast<std::size_t>(k)] += third * g[c];
        }
    }
    return w;
}

std::vector<double> BilinearProblem::load(const ParamVector& xi) const {
    const std::vector<double> b = sampler_.load_nodes(xi);
    const auto mass = grid_->lumped_mass_interior();
    std::vector<double> f(grid_->interior_count());
    for (std::size_t k = 0; k < f.size(); ++k) f[k] = mass[k] * b[grid_->node_of_interior(k)];
    return f;
}

SparseOperator BilinearProblem::system_operator(const GridFunction& u, const ParamVector& xi) const {
    check_neighborhood(u);
    std::vector<double> r = reaction_weights(xi);
    for (std::size_t k = 0; k < r.size(); ++k) r[k] *= u[grid_->node_of_interior(k)];
    return assemble_stiffness(*grid_, CellField(grid_, sampler_.kappa_cells(xi))).plus_diagonal(r);
}

GridFunction BilinearProblem::solve_state(const GridFunction& u, const ParamVector& xi) const {
    return GridFunction(grid_, Layout::Interior, solve_spd(system_operator(u, xi), load(xi), linear_).x);
}

GridFunction BilinearProblem::solve_adjoint(const GridFunction& u, const ParamVector& xi,
                                            const GridFunction& y) const {
    const auto mass = grid_->lumped_mass_interior();
    std::vector<double> rhs(y.size());
    for (std::size_t k = 0; k < rhs.size(); ++k) rhs[k] = -mass[k] * (y[k] - target_[k]);
    return GridFunction(grid_, Layout::Interior, solve_spd(system_operator(u, xi), rhs, linear_).x);
}

double BilinearProblem::objective(const GridFunction& y) const {
    const double d = l2_norm(y - target_);
    return 0.5 * d * d;
}

double BilinearProblem::value(const GridFunction& u, const ParamVector& xi) const {
    return objective(solve_state(u, xi));
}

GridFunction BilinearProblem::gradient_from_states(const ParamVector& xi, const GridFunction& y,
                                                   const GridFunction& z) const {
    const std::vector<double> w = reaction_weights(xi);
    const auto mass = grid_->lumped_mass_interior();
    GridFunction g(grid_, Layout::AllNodes);
    for (std::size_t k = 0; k < w.size(); ++k) g[grid_->node_of_interior(k)] = w[k] / mass[k] * y[k] * z[k];
    return g;
}

double BilinearProblem::m_h1norm(const ParamVector& xi, const GridFunction& y, const GridFunction& z) const {
    const GridFunction m = gradient_from_states(xi, y, z);
    const Norms nm = norms(m);
    return std::sqrt(nm.l2 * nm.l2 + nm.h01 * nm.h01);
}

BilinearGradient BilinearProblem::grad_p(const GridFunction& u, const ParamVector& xi) const {
    const SparseOperator k = system_operator(u, xi);
    const BandedCholesky chol(k);
    GridFunction y(grid_, Layout::Interior, chol.solve(load(xi)));
    const auto mass = grid_->lumped_mass_interior();
    std::vector<double> rhs(y.size());
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = -mass[i] * (y[i] - target_[i]);
    GridFunction z(grid_, Layout::Interior,
                   linear_.method == LinearSolver::BandedCholesky ? chol.solve(rhs) : solve_spd(k, rhs, linear_).x);
    BilinearGradient out;
    out.value = objective(y);
    out.grad = gradient_from_states(xi, y, z);
    const Norms nm = norms(out.grad);
    out.m_h1norm = std::sqrt(nm.l2 * nm.l2 + nm.h01 * nm.h01);
    return out;
}

SelfBound BilinearProblem::self_bound_check(const GridFunction& y) const {
    if (y.grid() != grid_ || y.layout() != Layout::Interior)
        throw ValidationError("state must be an interior grid function on the problem grid");
    const auto mass = grid_->lumped_mass_interior();
    std::vector<double> r(y.size());
    for (std::size_t k = 0; k < r.size(); ++k) r[k] = mass[k] * (y[k] - target_[k]);
    const std::vector<double> riesz = BandedCholesky(unit_stiffness_).solve(r);
    double lhs = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) lhs += r[k] * riesz[k];
    const double cd = bounds_.friedrichs;
    return {lhs, 2.0 * cd * cd * objective(y)};
}

double BilinearProblem::coercivity_margin(const GridFunction& u, const ParamVector& xi) const {
    return smallest_generalized_eigenpair(system_operator(u, xi), unit_stiffness_, 1e-10).value;
}

}  // namespace saapde
