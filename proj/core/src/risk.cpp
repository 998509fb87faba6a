#include "saapde/risk.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "saapde/errors.hpp"
#include "saapde/parallel.hpp"

namespace saapde {

namespace {

void check_beta(double beta) {
    if (!(beta > 0.0 && beta < 1.0)) throw ValidationError(fmt::format("beta must lie in (0, 1), got {}", beta));
}

void check_weights(std::span<const double> values, std::span<const double> weights) {
    if (values.empty()) throw ValidationError("AVaR of an empty sample");
    if (values.size() != weights.size()) throw ValidationError("values and weights differ in length");
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (!(weights[i] > 0.0)) throw ValidationError("weights must be positive");
        if (!std::isfinite(values[i])) throw ValidationError("AVaR of non-finite values");
        total += weights[i];
    }
    if (std::abs(total - 1.0) > 1e-12) throw ValidationError(fmt::format("weights sum to {:.17g}, not 1", total));
}

double tree_sum(std::span<const double> x) {
    if (x.size() <= 8) {
        double s = 0.0;
        for (double v : x) s += v;
        return s;
    }
    const std::size_t half = x.size() / 2;
    return tree_sum(x.first(half)) + tree_sum(x.subspan(half));
}

void check_control(const GridPtr& grid, const GridFunction& u) {
    if (u.grid() != grid || u.layout() != Layout::AllNodes)
        throw ValidationError("control must be an all-node grid function on the problem grid");
    if (!u.all_finite()) throw ValidationError("control contains non-finite values");
}

/// sum_i w_i f_i in index order, skipping zero weights.
GridFunction weighted_field_sum(const GridPtr& grid, std::span<const double> w, std::span<const GridFunction> f) {
    GridFunction out(grid, Layout::AllNodes);
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (w[i] == 0.0) continue;
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += w[i] * f[i][k];
    }
    return out;
}

}  // namespace

double ordered_sum(std::span<const double> terms) { return tree_sum(terms); }

double Interval::distance(double x) const noexcept {
    if (x < lo) return lo - x;
    if (x > hi) return x - hi;
    return 0.0;
}

AvarValue avar_empirical(std::span<const double> values, std::span<const double> weights, double beta) {
    check_beta(beta);
    check_weights(values, weights);
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

    // The minimisers are the beta-quantiles: F(t-) <= beta <= F(t).
    constexpr double flat_tol = 1e-12;
    double cumulative = 0.0;
    std::size_t k = 0;
    for (; k < order.size(); ++k) {
        cumulative += weights[order[k]];
        if (cumulative >= beta - flat_tol) break;
    }
    k = std::min(k, order.size() - 1);
    Interval t_star = Interval::point(values[order[k]]);
    if (std::abs(cumulative - beta) <= flat_tol && k + 1 < order.size()) {
        std::size_t next = k + 1;
        t_star.hi = values[order[next]];
    }
    return {avar_objective_in_t(values, weights, beta, t_star.lo), t_star};
}

double avar_objective_in_t(std::span<const double> values, std::span<const double> weights, double beta,
                           double t) {
    check_beta(beta);
    std::vector<double> terms(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) terms[i] = weights[i] * std::max(values[i] - t, 0.0);
    return t + tree_sum(terms) / (1.0 - beta);
}

// ---------------------------------------------------------------------------

RegularizerSpec::RegularizerSpec(GridFunction lower, GridFunction upper, double alpha)
    : lower_(std::move(lower)), upper_(std::move(upper)), alpha_(alpha) {
    if (!(alpha_ >= 0.0) || !std::isfinite(alpha_)) throw ValidationError("alpha must be finite and non-negative");
    if (lower_.grid() != upper_.grid() || lower_.layout() != Layout::AllNodes || upper_.layout() != Layout::AllNodes)
        throw ValidationError("box bounds must be all-node grid functions on one grid");
    for (std::size_t k = 0; k < lower_.size(); ++k)
        if (!(lower_[k] <= upper_[k]) || !std::isfinite(lower_[k]) || !std::isfinite(upper_[k]))
            throw ValidationError("box bounds must be finite with lower <= upper");
}

RegularizerSpec RegularizerSpec::box(const GridPtr& grid, double lower, double upper, double alpha) {
    return RegularizerSpec(constant_field(grid, Layout::AllNodes, lower), constant_field(grid, Layout::AllNodes, upper),
                           alpha);
}

double RegularizerSpec::value(const GridFunction& u) const {
    const double n = l2_norm(u);
    return 0.5 * alpha_ * n * n;
}

bool RegularizerSpec::contains(const GridFunction& u) const {
    for (std::size_t k = 0; k < u.size(); ++k)
        if (u[k] < lower_[k] || u[k] > upper_[k]) return false;
    return true;
}

double RegularizerSpec::distance_to_box(const GridFunction& u) const {
    return l2_norm(u - project(u));
}

double RegularizerSpec::radius() const {
    GridFunction far(lower_.grid(), Layout::AllNodes);
    for (std::size_t k = 0; k < far.size(); ++k) far[k] = std::max(std::abs(lower_[k]), std::abs(upper_[k]));
    return l2_norm(far);
}

GridFunction RegularizerSpec::project(const GridFunction& v) const {
    GridFunction out = v;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::clamp(v[k], lower_[k], upper_[k]);
    return out;
}

GridFunction RegularizerSpec::prox(const GridFunction& v, double gamma) const {
    if (!(gamma > 0.0)) throw ValidationError("prox step must be positive");
    if (v.grid() != lower_.grid() || v.layout() != Layout::AllNodes)
        throw ValidationError("prox argument must be an all-node grid function on the regulariser grid");
    const double shrink = 1.0 / (1.0 + gamma * alpha_);
    GridFunction out = v;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::clamp(v[k] * shrink, lower_[k], upper_[k]);
    return out;
}

GridFunction prox_psi(const RegularizerSpec& reg, const GridFunction& v, double gamma) { return reg.prox(v, gamma); }

// ---------------------------------------------------------------------------

AvarSaaProblem::AvarSaaProblem(std::shared_ptr<const SemilinearProblem> problem, ScenarioSet scenarios,
                               RegularizerSpec reg, AvarOptions options, std::size_t threads)
    : problem_(std::move(problem)),
      scenarios_(std::move(scenarios)),
      reg_(std::move(reg)),
      options_(options),
      threads_(std::max<std::size_t>(threads, 1)) {
    check_beta(options_.beta);
    if (!(options_.kink_tol_rel >= 0.0)) throw ValidationError("kink tolerance must be non-negative");
    if (scenarios_.size() == 0) throw ValidationError("empty scenario set");
    if (reg_.lower().grid() != problem_->grid()) throw ValidationError("regulariser lives on a different grid");
}

Evaluation AvarSaaProblem::evaluate(const GridFunction& u, std::optional<double> t) const {
    check_control(grid(), u);
    const std::size_t n = scenarios_.size();
    Evaluation e;
    e.u = u;
    e.states.resize(n);
    e.scenario_values.resize(n);
    parallel_for(n, threads_, [&](std::size_t i) {
        e.states[i] = problem_->solve_state(u, scenarios_[i].xi);
        e.scenario_values[i] = problem_->objective(e.states[i]);
    });
    const std::vector<double> w = scenarios_.weights();
    if (!t) t = avar_empirical(e.scenario_values, w, options_.beta).t_star.mid();
    e.t = t;
    e.smooth = avar_objective_in_t(e.scenario_values, w, options_.beta, *t);
    e.reg = reg_.value(u);
    return e;
}

void AvarSaaProblem::add_gradient(Evaluation& e) const {
    if (e.has_gradient) return;
    const std::size_t n = scenarios_.size();
    if (e.states.size() != n || !e.t) throw ValidationError("evaluation does not belong to this AVaR problem");
    const double t = *e.t;
    const double tol = kink_tol(t);
    const double tail = 1.0 - options_.beta;
    const std::vector<double> w = scenarios_.weights();

    SubgradientElement& sub = e.sub;
    sub.theta.assign(n, Interval{});
    sub.theta_selected.assign(n, 0.0);
    std::vector<double> above, kink, hi_terms, lo_terms;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = e.scenario_values[i] - t;
        if (d > tol) {
            sub.theta[i] = Interval::point(1.0);
            above.push_back(w[i]);
        } else if (d < -tol) {
            sub.theta[i] = Interval::point(0.0);
        } else {
            sub.theta[i] = {0.0, 1.0};
            kink.push_back(w[i]);
        }
        hi_terms.push_back(w[i] * sub.theta[i].hi);
        lo_terms.push_back(w[i] * sub.theta[i].lo);
    }
    // Kink scenarios share the tail mass left over by the strictly active
    // ones, which is the selection that makes 0 lie in the t-slot.
    const double kink_mass = tree_sum(kink);
    const double kink_theta =
        kink_mass > 0.0 ? std::clamp((tail - tree_sum(above)) / kink_mass, 0.0, 1.0) : 0.0;
    for (std::size_t i = 0; i < n; ++i)
        sub.theta_selected[i] = sub.theta[i].width() > 0.0 ? kink_theta : sub.theta[i].lo;
    sub.t_interval = {1.0 - tree_sum(hi_terms) / tail, 1.0 - tree_sum(lo_terms) / tail};

    std::vector<GridFunction> grads(n);
    std::vector<double> coeff(n);
    parallel_for(n, threads_, [&](std::size_t i) {
        if (sub.theta_selected[i] == 0.0) return;
        const GridFunction z = problem_->solve_adjoint(e.u, scenarios_[i].xi, e.states[i]);
        grads[i] = problem_->gradient_from_adjoint(z);
    });
    std::vector<double> selected_terms(n);
    for (std::size_t i = 0; i < n; ++i) {
        selected_terms[i] = w[i] * sub.theta_selected[i];
        coeff[i] = selected_terms[i] / tail;
    }
    sub.t_selected = std::clamp(1.0 - tree_sum(selected_terms) / tail, sub.t_interval.lo, sub.t_interval.hi);
    sub.g_u = weighted_field_sum(grid(), coeff, grads);
    e.has_gradient = true;
}

std::unique_ptr<SaaObjective> AvarSaaProblem::restricted(std::size_t k) const {
    return std::make_unique<AvarSaaProblem>(problem_, scenarios_.leading(k), reg_, options_, threads_);
}

// ---------------------------------------------------------------------------

BilinearSaaProblem::BilinearSaaProblem(std::shared_ptr<const BilinearProblem> problem, ScenarioSet scenarios,
                                       RegularizerSpec reg, std::size_t threads)
    : problem_(std::move(problem)),
      scenarios_(std::move(scenarios)),
      reg_(std::move(reg)),
      threads_(std::max<std::size_t>(threads, 1)) {
    if (scenarios_.size() == 0) throw ValidationError("empty scenario set");
    if (reg_.lower().grid() != problem_->grid()) throw ValidationError("regulariser lives on a different grid");
}

Evaluation BilinearSaaProblem::evaluate(const GridFunction& u, std::optional<double> t) const {
    if (t) throw ValidationError("the bilinear problem has no auxiliary variable t");
    check_control(grid(), u);
    problem_->check_neighborhood(u);
    const std::size_t n = scenarios_.size();
    Evaluation e;
    e.u = u;
    e.scenario_values.resize(n);
    parallel_for(n, threads_, [&](std::size_t i) { e.scenario_values[i] = problem_->value(u, scenarios_[i].xi); });
    const std::vector<double> w = scenarios_.weights();
    std::vector<double> terms(n);
    for (std::size_t i = 0; i < n; ++i) terms[i] = w[i] * e.scenario_values[i];
    e.smooth = tree_sum(terms);
    e.reg = reg_.value(u);
    return e;
}

void BilinearSaaProblem::add_gradient(Evaluation& e) const {
    if (e.has_gradient) return;
    const std::size_t n = scenarios_.size();
    if (e.scenario_values.size() != n || e.t) throw ValidationError("evaluation does not belong to this problem");
    std::vector<GridFunction> grads(n);
    parallel_for(n, threads_, [&](std::size_t i) { grads[i] = problem_->grad_p(e.u, scenarios_[i].xi).grad; });
    e.sub.g_u = weighted_field_sum(grid(), scenarios_.weights(), grads);
    e.sub.t_interval = Interval::point(0.0);
    e.has_gradient = true;
}

std::unique_ptr<SaaObjective> BilinearSaaProblem::restricted(std::size_t k) const {
    return std::make_unique<BilinearSaaProblem>(problem_, scenarios_.leading(k), reg_, threads_);
}

double BilinearSaaProblem::max_m_h1norm(const GridFunction& u) const {
    std::vector<double> m(scenarios_.size());
    parallel_for(m.size(), threads_, [&](std::size_t i) { m[i] = problem_->grad_p(u, scenarios_[i].xi).m_h1norm; });
    return *std::max_element(m.begin(), m.end());
}

// ---------------------------------------------------------------------------

double saa_avar_objective(const AvarSaaProblem& saa, const AvarPoint& p) {
    const Evaluation e = saa.evaluate(p.u, p.t);
    return e.total();
}

SubgradientElement saa_avar_subgradient(const AvarSaaProblem& saa, const AvarPoint& p) {
    Evaluation e = saa.evaluate_with_gradient(p.u, p.t);
    return std::move(e.sub);
}

ValueAndGradient saa_bilinear_objective_gradient(const BilinearSaaProblem& saa, const GridFunction& u) {
    Evaluation e = saa.evaluate_with_gradient(u);
    return {e.total(), std::move(e.sub.g_u)};
}

}  // namespace saapde
