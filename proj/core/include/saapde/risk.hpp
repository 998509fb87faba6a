#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "saapde/bilinear.hpp"
#include "saapde/grid.hpp"
#include "saapde/random_field.hpp"
#include "saapde/semilinear.hpp"

namespace saapde {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    static Interval point(double x) { return {x, x}; }
    double width() const noexcept { return hi - lo; }
    double mid() const noexcept { return 0.5 * (lo + hi); }
    bool contains(double x) const noexcept { return lo <= x && x <= hi; }
    /// Distance from x to the interval (zero inside).
    double distance(double x) const noexcept;
};

struct AvarValue {
    double avar = 0.0;
    Interval t_star;  // set of minimisers of t + E[(Z - t)_+] / (1 - beta)
};

/// AVaR_beta of the discrete distribution sum_i w_i delta_{Z_i}. The weights
/// must be positive and sum to one; beta must lie in (0, 1).
AvarValue avar_empirical(std::span<const double> values, std::span<const double> weights, double beta);

/// t + (1/(1-beta)) sum_i w_i (Z_i - t)_+ .
double avar_objective_in_t(std::span<const double> values, std::span<const double> weights, double beta,
                           double t);

/// Box constraint lower <= u <= upper plus (alpha/2) ||u||^2, both nodewise on
/// all nodes.
class RegularizerSpec {
public:
    RegularizerSpec(GridFunction lower, GridFunction upper, double alpha);
    static RegularizerSpec box(const GridPtr& grid, double lower, double upper, double alpha);

    const GridFunction& lower() const noexcept { return lower_; }
    const GridFunction& upper() const noexcept { return upper_; }
    double alpha() const noexcept { return alpha_; }

    double value(const GridFunction& u) const;  // (alpha/2) ||u||^2, box assumed
    bool contains(const GridFunction& u) const;
    /// Lumped L2 distance to the box.
    double distance_to_box(const GridFunction& u) const;
    /// sup of ||u|| over the box.
    double radius() const;
    GridFunction project(const GridFunction& v) const;
    /// clamp(v / (1 + gamma alpha), lower, upper).
    GridFunction prox(const GridFunction& v, double gamma) const;

private:
    GridFunction lower_;
    GridFunction upper_;
    double alpha_;
};

GridFunction prox_psi(const RegularizerSpec& reg, const GridFunction& v, double gamma);

struct AvarPoint {
    GridFunction u;
    double t = 0.0;
};

/// The (u, t) block of an element of the SAA Clarke subdifferential.
struct SubgradientElement {
    GridFunction g_u;           // L2 representative, smooth part only
    Interval t_interval;        // 1 - (1/(1-beta)) sum_i w_i theta_i over the theta-intervals
    std::vector<Interval> theta;          // admissible theta_i per scenario
    std::vector<double> theta_selected;   // selection used for g_u
    double t_selected = 0.0;              // t-slot value of that selection
};

/// One evaluation of an SAA objective f(u) (or f(u, t)); states are kept so a
/// gradient can be added without re-solving.
struct Evaluation {
    GridFunction u;
    double smooth = 0.0;  // risk part, without the regulariser
    double reg = 0.0;     // (alpha/2) ||u||^2
    std::vector<double> scenario_values;
    std::optional<double> t;  // AVaR only
    bool has_gradient = false;
    SubgradientElement sub;

    double total() const noexcept { return smooth + reg; }

    std::vector<GridFunction> states;
};

/// Common interface used by the optimiser for both problem kinds.
class SaaObjective {
public:
    virtual ~SaaObjective() = default;

    virtual const ScenarioSet& scenarios() const noexcept = 0;
    virtual const RegularizerSpec& regularizer() const noexcept = 0;
    virtual const GridPtr& grid() const noexcept = 0;
    virtual bool has_t() const noexcept = 0;
    virtual std::size_t threads() const noexcept = 0;

    /// Values at u. For AVaR, t = nullopt minimises over t exactly (midpoint of
    /// the minimiser interval); a given t is used as is.
    virtual Evaluation evaluate(const GridFunction& u, std::optional<double> t = std::nullopt) const = 0;
    /// Adds the subgradient element to an evaluation produced by this object.
    virtual void add_gradient(Evaluation& e) const = 0;
    /// Same objective on the first k scenarios (weights renormalised).
    virtual std::unique_ptr<SaaObjective> restricted(std::size_t k) const = 0;

    Evaluation evaluate_with_gradient(const GridFunction& u, std::optional<double> t = std::nullopt) const {
        Evaluation e = evaluate(u, t);
        add_gradient(e);
        return e;
    }
};

struct AvarOptions {
    double beta = 0.5;
    /// Scenarios with |J_i - t| <= kink_tol_rel (1 + |t|) are kinks.
    double kink_tol_rel = 1e-10;
};

/// min over (u, t) of sum_i w_i [t + (J_i(u) - t)_+ / (1 - beta)] + psi(u) for
/// the semilinear model.
class AvarSaaProblem final : public SaaObjective {
public:
    AvarSaaProblem(std::shared_ptr<const SemilinearProblem> problem, ScenarioSet scenarios, RegularizerSpec reg,
                   AvarOptions options = {}, std::size_t threads = 1);

    const ScenarioSet& scenarios() const noexcept override { return scenarios_; }
    const RegularizerSpec& regularizer() const noexcept override { return reg_; }
    const GridPtr& grid() const noexcept override { return problem_->grid(); }
    bool has_t() const noexcept override { return true; }
    std::size_t threads() const noexcept override { return threads_; }
    const SemilinearProblem& problem() const noexcept { return *problem_; }
    const AvarOptions& options() const noexcept { return options_; }

    Evaluation evaluate(const GridFunction& u, std::optional<double> t = std::nullopt) const override;
    void add_gradient(Evaluation& e) const override;
    std::unique_ptr<SaaObjective> restricted(std::size_t k) const override;

    double kink_tol(double t) const noexcept { return options_.kink_tol_rel * (1.0 + std::abs(t)); }

private:
    std::shared_ptr<const SemilinearProblem> problem_;
    ScenarioSet scenarios_;
    RegularizerSpec reg_;
    AvarOptions options_;
    std::size_t threads_;
};

/// min over u of sum_i w_i J(S(u, xi_i)) + psi(u) for the bilinear model.
class BilinearSaaProblem final : public SaaObjective {
public:
    BilinearSaaProblem(std::shared_ptr<const BilinearProblem> problem, ScenarioSet scenarios, RegularizerSpec reg,
                       std::size_t threads = 1);

    const ScenarioSet& scenarios() const noexcept override { return scenarios_; }
    const RegularizerSpec& regularizer() const noexcept override { return reg_; }
    const GridPtr& grid() const noexcept override { return problem_->grid(); }
    bool has_t() const noexcept override { return false; }
    std::size_t threads() const noexcept override { return threads_; }
    const BilinearProblem& problem() const noexcept { return *problem_; }

    Evaluation evaluate(const GridFunction& u, std::optional<double> t = std::nullopt) const override;
    void add_gradient(Evaluation& e) const override;
    std::unique_ptr<SaaObjective> restricted(std::size_t k) const override;

    /// Largest m_h1norm over the scenarios at u.
    double max_m_h1norm(const GridFunction& u) const;

private:
    std::shared_ptr<const BilinearProblem> problem_;
    ScenarioSet scenarios_;
    RegularizerSpec reg_;
    std::size_t threads_;
};

double saa_avar_objective(const AvarSaaProblem& saa, const AvarPoint& p);
SubgradientElement saa_avar_subgradient(const AvarSaaProblem& saa, const AvarPoint& p);

struct ValueAndGradient {
    double value = 0.0;
    GridFunction grad;
};
ValueAndGradient saa_bilinear_objective_gradient(const BilinearSaaProblem& saa, const GridFunction& u);

/// Pairwise sum in index order; used for every scenario reduction so results
/// never depend on the thread schedule.
double ordered_sum(std::span<const double> terms);

}  // namespace saapde
