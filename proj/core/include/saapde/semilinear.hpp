#pragma once

#include <cstddef>
#include <vector>

#include "saapde/grid.hpp"
#include "saapde/random_field.hpp"

namespace saapde {

struct NewtonOptions {
    /// Stop once ||A y + M y^3 - M(u + b)||_2 <= tol * max(1, ||M(u + b)||_2).
    double tol = 1e-12;
    std::size_t max_iterations = 50;
    double backtrack_factor = 0.5;
    double min_damping = 0x1.0p-20;
    /// One extra undamped step after convergence when it lowers the residual.
    bool polish = true;
};

struct NewtonReport {
    std::size_t iterations = 0;
    std::vector<double> residual_history;  // residual norm after each accepted step
};

struct ValueGradient {
    double value = 0.0;
    GridFunction grad;  // L2 representative on all nodes
};

/// Risk-neutral inner model: kappa-diffusion with cubic reaction,
///
///   (kappa(xi) grad y, grad v) + (y^3, v) = (u + b(xi), v),
///
/// with tracking functional Jhat(u, xi) = 1/2 ||y - y_d||^2. The cubic term and
/// all L2 pairings use the lumped mass.
class SemilinearProblem {
public:
    SemilinearProblem(GridPtr grid, FieldSpec spec, GridFunction target, NewtonOptions newton = {},
                      SolveOptions linear = {});

    /// y_d(x) = amplitude * sin(pi x1) sin(pi x2) on interior nodes.
    static GridFunction default_target(const GridPtr& grid, double amplitude = 0.1);

    const GridPtr& grid() const noexcept { return grid_; }
    const FieldSpec& spec() const noexcept { return sampler_.spec(); }
    const FieldSampler& sampler() const noexcept { return sampler_; }
    const GridFunction& target() const noexcept { return target_; }
    const NewtonOptions& newton_options() const noexcept { return newton_; }

    GridFunction solve_state(const GridFunction& u, const ParamVector& xi, NewtonReport* report = nullptr) const;
    /// Solution with the cubic term dropped (also the Newton starting point).
    GridFunction solve_linear_state(const GridFunction& u, const ParamVector& xi) const;
    GridFunction solve_adjoint(const GridFunction& u, const ParamVector& xi, const GridFunction& y) const;

    double objective(const GridFunction& y) const;  // 1/2 ||y - y_d||^2
    double value(const GridFunction& u, const ParamVector& xi) const;
    ValueGradient grad_Jhat(const GridFunction& u, const ParamVector& xi) const;
    /// -z lifted to all nodes.
    GridFunction gradient_from_adjoint(const GridFunction& z) const;

    /// Adjoint system matrix A(xi) + 3 M diag(y^2).
    SparseOperator adjoint_operator(const ParamVector& xi, const GridFunction& y) const;
    /// Nonlinear residual A y + M y^3 - M(u + b).
    std::vector<double> residual(const GridFunction& u, const ParamVector& xi, const GridFunction& y) const;

private:
    std::vector<double> load(const GridFunction& u, const ParamVector& xi) const;
    SparseOperator stiffness(const ParamVector& xi) const;

    GridPtr grid_;
    FieldSampler sampler_;
    GridFunction target_;
    NewtonOptions newton_;
    SolveOptions linear_;
};

/// Constants of the a priori bounds for the semilinear model.
struct SemilinearBounds {
    double friedrichs = 0.0;  // C_D
    double kappa_min = 0.0;
    double b_max = 0.0;
    double r_ad = 0.0;        // sup of ||u|| over the admissible set
    double target_norm = 0.0;  // ||y_d||
    double c_state = 0.0;      // (C_D/kappa_min)(r_ad + 1) + C_D b_max / kappa_min
    double c_adjoint = 0.0;    // (C_D^2/kappa_min) c_state + (C_D/kappa_min) ||y_d||
    double value_bound = 0.0;  // C_D^2 c_state^2 + ||y_d||^2, also the bound on t_N

    /// ||y||_{H^1_0} <= (C_D/kappa_min)||u|| + C_D b_max/kappa_min.
    double state_bound(double u_norm) const { return friedrichs / kappa_min * (u_norm + b_max); }
    double gradient_bound() const { return friedrichs * c_adjoint; }
};

SemilinearBounds semilinear_bounds(double friedrichs, const FieldSpec& spec, double b_max, double r_ad,
                                   double target_norm);

}  // namespace saapde
