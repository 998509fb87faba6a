#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "saapde/grid.hpp"
#include "saapde/random_field.hpp"

namespace saapde {

struct BilinearGradient {
    double value = 0.0;
    GridFunction grad;      // L2 representative on all nodes
    double m_h1norm = 0.0;  // H^1 norm of g y z (the subgradient representative)
};

struct BilinearBounds {
    double friedrichs = 0.0;  // C_D
    double h01_l4 = 0.0;      // C_{H^1_0; L^4}
    double kappa_min = 0.0;
    double g_max = 0.0;
    double b_max = 0.0;
    double target_norm = 0.0;
    double delta = 0.0;         // kappa_min / (2 g_max C_{H^1_0;L^4}^2)
    double guard_radius = 0.0;  // 0.9 delta

    double lipschitz_dj() const { return friedrichs * friedrichs; }  // ell = C_D^2
    /// varrho(s) = C_D^2 s^2 + ||y_d||^2.
    double varrho(double s) const { return friedrichs * friedrichs * s * s + target_norm * target_norm; }
    double state_bound(double b_norm) const { return 2.0 / kappa_min * friedrichs * b_norm; }
    double value_bound() const { return varrho(state_bound(b_max)); }
    /// (2/kappa_min) sqrt(2 ell varrho((2/kappa_min) C_D b_max)).
    double adjoint_bound() const { return 2.0 / kappa_min * std::sqrt(2.0 * lipschitz_dj() * value_bound()); }
    /// C_{H^1_0;L^4}^2 g_max (2/kappa_min)^2 C_D b_max (2 ell varrho(...))^{1/2}.
    double gradient_bound() const {
        return h01_l4 * h01_l4 * g_max * state_bound(b_max) * adjoint_bound();
    }
};

struct SelfBound {
    double lhs = 0.0;  // ||DJ(y)||^2_{H^{-1}}
    double rhs = 0.0;  // 2 C_D^2 J(y)
};

/// Risk-neutral bilinear control of
///
///   (kappa(xi) grad y, grad v) + (g(xi) u y, v) = (b(xi), v)
///
/// with J(y) = 1/2 ||y - y_d||^2 and U_ad = {0 <= u <= upper}. The reaction
/// term is lumped: node i carries sum_{T ni i} g_T |T| / 3.
class BilinearProblem {
public:
    BilinearProblem(GridPtr grid, FieldSpec spec, GridFunction target, GridFunction upper,
                    SolveOptions linear = {}, double guard_safety = 0.9,
                    std::optional<GridConstants> constants = std::nullopt);

    const GridPtr& grid() const noexcept { return grid_; }
    const FieldSpec& spec() const noexcept { return sampler_.spec(); }
    const FieldSampler& sampler() const noexcept { return sampler_; }
    const GridFunction& target() const noexcept { return target_; }
    const GridFunction& upper() const noexcept { return upper_; }
    const BilinearBounds& bounds() const noexcept { return bounds_; }
    const SparseOperator& unit_stiffness() const noexcept { return unit_stiffness_; }

    /// L2 distance of u to {0 <= u <= upper}.
    double distance_to_admissible(const GridFunction& u) const;
    /// Throws OutOfNeighborhoodError when the distance reaches the guard radius.
    void check_neighborhood(const GridFunction& u) const;

    SparseOperator system_operator(const GridFunction& u, const ParamVector& xi) const;
    GridFunction solve_state(const GridFunction& u, const ParamVector& xi) const;
    GridFunction solve_adjoint(const GridFunction& u, const ParamVector& xi, const GridFunction& y) const;
    double objective(const GridFunction& y) const;
    double value(const GridFunction& u, const ParamVector& xi) const;
    BilinearGradient grad_p(const GridFunction& u, const ParamVector& xi) const;
    /// g-weighted nodal product gbar y z on all nodes, gbar_i = (M_g)_ii / M_ii.
    GridFunction gradient_from_states(const ParamVector& xi, const GridFunction& y, const GridFunction& z) const;
    double m_h1norm(const ParamVector& xi, const GridFunction& y, const GridFunction& z) const;

    SelfBound self_bound_check(const GridFunction& y) const;
    /// min over v of v^T (A + R) v / v^T A_1 v.
    double coercivity_margin(const GridFunction& u, const ParamVector& xi) const;

private:
    std::vector<double> reaction_weights(const ParamVector& xi) const;  // (M_g)_ii on interior nodes
    std::vector<double> load(const ParamVector& xi) const;

    GridPtr grid_;
    FieldSampler sampler_;
    GridFunction target_;
    GridFunction upper_;
    SolveOptions linear_;
    SparseOperator unit_stiffness_;
    BilinearBounds bounds_;
};

/// Constant cap on all nodes.
GridFunction constant_field(const GridPtr& grid, Layout layout, double value);

}  // namespace saapde
