#include "saapde/random_field.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "saapde/errors.hpp"

namespace saapde {

namespace {

double abs_sum(const std::vector<double>& v) {
    long double s = 0.0L;
    for (double x : v) s += std::abs(x);
    return static_cast<double>(s);
}

std::vector<double> harmonic_amplitudes(std::size_t m, double total) {
    std::vector<double> a(m);
    long double h = 0.0L;
    for (std::size_t j = 1; j <= m; ++j) h += 1.0L / static_cast<long double>(j);
    for (std::size_t j = 1; j <= m; ++j)
        a[j - 1] = static_cast<double>(static_cast<long double>(total) / (static_cast<long double>(j) * h));
    return a;
}

double base_load(double peak, double x1, double x2) {
    return peak * 16.0 * x1 * x2 * (1.0 - x1) * (1.0 - x2);
}

}  // namespace

ParamVector::ParamVector(std::vector<double> components) : xi_(std::move(components)) {
    for (double v : xi_)
        if (!(v >= -1.0 && v <= 1.0))
            throw ValidationError(fmt::format("parameter component {} outside [-1, 1]", v));
}

double cosine_mode(std::size_t j, double x1, double x2) {
    const double k = static_cast<double>(j) * std::numbers::pi;
    return std::cos(k * x1) * std::cos(k * x2);
}

FieldSpec FieldSpec::defaults(std::size_t m_xi, double load_peak, double load_fraction) {
    FieldSpec s;
    s.m_xi = m_xi;
    s.kappa0 = 1.0;
    s.kappa_amplitudes = harmonic_amplitudes(m_xi, 0.5);
    s.g0 = 1.0;
    s.g_amplitudes = harmonic_amplitudes(m_xi, 0.5);
    s.load_peak = load_peak;
    s.load_amplitudes = harmonic_amplitudes(m_xi, load_fraction * load_peak);
    return s;
}

void FieldSpec::validate() const {
    if (m_xi == 0) throw ValidationError("field spec needs at least one random parameter");
    if (kappa_amplitudes.size() != m_xi || g_amplitudes.size() != m_xi || load_amplitudes.size() != m_xi)
        throw ValidationError(fmt::format("field spec amplitudes must have m_xi = {} entries", m_xi));
    if (!(kappa_min() > 0.0))
        throw CoefficientBoundError(fmt::format(
            "kappa_min = kappa0 - sum|a_j| = {} must be positive", kappa_min()));
    if (g_min() < 0.0)
        throw CoefficientBoundError(fmt::format("g(xi) may become negative (g0 - sum|c_j| = {})", g_min()));
    for (double v : {kappa0, g0, load_peak})
        if (!std::isfinite(v)) throw ValidationError("field spec contains a non-finite value");
}

double FieldSpec::kappa_min() const { return static_cast<double>(static_cast<long double>(kappa0) - abs_sum(kappa_amplitudes)); }
double FieldSpec::kappa_max() const { return kappa0 + abs_sum(kappa_amplitudes); }
double FieldSpec::g_min() const { return g0 - abs_sum(g_amplitudes); }
double FieldSpec::g_max() const { return g0 + abs_sum(g_amplitudes); }

double FieldSpec::b_max(const Grid2D& grid) const {
    // Triangle inequality in the discrete norm: exact certificate for every xi.
    const auto mass = grid.lumped_mass_all();
    double base = 0.0;
    std::vector<double> mode_norm(m_xi, 0.0);
    for (std::size_t k = 0; k < grid.node_count(); ++k) {
        const auto x = grid.node_coords(k);
        const double b0 = base_load(load_peak, x[0], x[1]);
        base += mass[k] * b0 * b0;
        for (std::size_t j = 0; j < m_xi; ++j) {
            const double p = cosine_mode(j + 1, x[0], x[1]);
            mode_norm[j] += mass[k] * p * p;
        }
    }
    double bound = std::sqrt(base);
    for (std::size_t j = 0; j < m_xi; ++j) bound += std::abs(load_amplitudes[j]) * std::sqrt(mode_norm[j]);
    return bound;
}

// ---------------------------------------------------------------------------

FieldSampler::FieldSampler(FieldSpec spec, GridPtr grid) : spec_(std::move(spec)), grid_(std::move(grid)) {
    spec_.validate();
    const auto cells = grid_->cells();
    cell_modes_.assign(spec_.m_xi, std::vector<double>(cells.size()));
    node_modes_.assign(spec_.m_xi, std::vector<double>(grid_->node_count()));
    base_load_.resize(grid_->node_count());
    for (std::size_t j = 0; j < spec_.m_xi; ++j) {
        for (std::size_t c = 0; c < cells.size(); ++c)
            cell_modes_[j][c] = cosine_mode(j + 1, cells[c].midpoint[0], cells[c].midpoint[1]);
        for (std::size_t k = 0; k < grid_->node_count(); ++k) {
            const auto x = grid_->node_coords(k);
            node_modes_[j][k] = cosine_mode(j + 1, x[0], x[1]);
        }
    }
    for (std::size_t k = 0; k < grid_->node_count(); ++k) {
        const auto x = grid_->node_coords(k);
        base_load_[k] = base_load(spec_.load_peak, x[0], x[1]);
    }
}

void FieldSampler::check(const ParamVector& xi) const {
    if (xi.size() != spec_.m_xi)
        throw ValidationError(fmt::format("parameter has {} components, field spec expects {}", xi.size(),
                                          spec_.m_xi));
    for (double x : xi.components())
        if (!(std::abs(x) <= 1.0)) throw ValidationError(fmt::format("parameter component {} outside [-1, 1]", x));
}

std::vector<double> FieldSampler::kappa_cells(const ParamVector& xi) const {
    check(xi);
    std::vector<double> out(grid_->cell_count(), spec_.kappa0);
    for (std::size_t j = 0; j < spec_.m_xi; ++j) {
        const double a = xi[j] * spec_.kappa_amplitudes[j];
        if (a == 0.0) continue;
        for (std::size_t c = 0; c < out.size(); ++c) out[c] += a * cell_modes_[j][c];
    }
    return out;
}

std::vector<double> FieldSampler::g_cells(const ParamVector& xi) const {
    check(xi);
    std::vector<double> out(grid_->cell_count(), spec_.g0);
    for (std::size_t j = 0; j < spec_.m_xi; ++j) {
        const double a = xi[j] * spec_.g_amplitudes[j];
        if (a == 0.0) continue;
        for (std::size_t c = 0; c < out.size(); ++c) out[c] += a * cell_modes_[j][c];
    }
    return out;
}

std::vector<double> FieldSampler::load_nodes(const ParamVector& xi) const {
    check(xi);
    std::vector<double> out = base_load_;
    for (std::size_t j = 0; j < spec_.m_xi; ++j) {
        const double a = xi[j] * spec_.load_amplitudes[j];
        if (a == 0.0) continue;
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += a * node_modes_[j][k];
    }
    return out;
}

SampledFields FieldSampler::sample(const ParamVector& xi) const {
    return {CellField(grid_, kappa_cells(xi)), CellField(grid_, g_cells(xi)),
            GridFunction(grid_, Layout::AllNodes, load_nodes(xi))};
}

SampledFields sample_fields(const FieldSpec& spec, const ParamVector& xi, const GridPtr& grid) {
    return FieldSampler(spec, grid).sample(xi);
}

// ---------------------------------------------------------------------------

std::string ScenarioProvenance::describe() const {
    switch (kind) {
        case Kind::MonteCarlo: return fmt::format("monte_carlo(seed={}, N={})", seed, count);
        case Kind::Quadrature: return fmt::format("quadrature(level={}, N={})", level, count);
        case Kind::Explicit: break;
    }
    return fmt::format("explicit(N={})", count);
}

ScenarioSet::ScenarioSet(std::vector<Scenario> scenarios, ScenarioProvenance provenance)
    : scenarios_(std::move(scenarios)), provenance_(provenance) {
    if (scenarios_.empty()) throw ValidationError("scenario set is empty");
    double total = 0.0;
    for (const auto& s : scenarios_) {
        if (!(s.weight > 0.0)) throw ValidationError("scenario weights must be positive");
        total += s.weight;
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw ValidationError(fmt::format("scenario weights sum to {:.17g}, expected 1", total));
    provenance_.count = scenarios_.size();
}

std::vector<double> ScenarioSet::weights() const {
    std::vector<double> w(scenarios_.size());
    std::transform(scenarios_.begin(), scenarios_.end(), w.begin(), [](const Scenario& s) { return s.weight; });
    return w;
}

ScenarioSet ScenarioSet::leading(std::size_t k) const {
    k = std::min(k, scenarios_.size());
    if (k == 0) throw ValidationError("leading() needs at least one scenario");
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) total += scenarios_[i].weight;
    std::vector<Scenario> out(scenarios_.begin(), scenarios_.begin() + static_cast<std::ptrdiff_t>(k));
    for (auto& s : out) s.weight /= total;
    // Renormalised weights may miss 1 by a rounding error; fold it into the last.
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < k; ++i) sum += out[i].weight;
    out.back().weight = 1.0 - sum;
    ScenarioProvenance p = provenance_;
    return ScenarioSet(std::move(out), p);
}

ParamVector draw_parameter(std::uint64_t seed, std::uint64_t index, std::size_t m_xi) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    std::mt19937_64 engine(seq);
    std::vector<double> xi(m_xi);
    for (double& v : xi) v = 2.0 * (static_cast<double>(engine() >> 11) * 0x1.0p-53) - 1.0;
    return ParamVector(std::move(xi));
}

ScenarioSet monte_carlo(const FieldSpec& spec, std::uint64_t seed, std::size_t count) {
    if (count == 0) throw ValidationError("Monte Carlo sample size must be at least 1");
    std::vector<Scenario> out;
    out.reserve(count);
    const double w = 1.0 / static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back({draw_parameter(seed, i, spec.m_xi), w});
    ScenarioProvenance p;
    p.kind = ScenarioProvenance::Kind::MonteCarlo;
    p.seed = seed;
    return ScenarioSet(std::move(out), p);
}

GaussRule gauss_legendre(int points) {
    if (points < 1) throw ValidationError("Gauss-Legendre rule needs at least one point");
    const auto n = static_cast<unsigned>(points);
    GaussRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (unsigned k = 0; k < n; ++k) {
        double x = std::cos(std::numbers::pi * (static_cast<double>(k) + 0.75) / (static_cast<double>(n) + 0.5));
        double dp = 1.0;
        for (int it = 0; it < 100; ++it) {
            const double p = std::legendre(n, x);
            const double pm = n > 1 ? std::legendre(n - 1, x) : 1.0;
            dp = static_cast<double>(n) * (x * p - pm) / (x * x - 1.0);
            const double dx = p / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        const double p = std::legendre(n, x);
        const double pm = n > 1 ? std::legendre(n - 1, x) : 1.0;
        dp = static_cast<double>(n) * (x * p - pm) / (x * x - 1.0);
        // Ascending order.
        rule.nodes[n - 1 - k] = x;
        rule.weights[n - 1 - k] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return rule;
}

ScenarioSet quadrature(const FieldSpec& spec, int level) {
    if (level < 1) throw ValidationError("quadrature level must be at least 1");
    double total = 1.0;
    for (std::size_t j = 0; j < spec.m_xi; ++j) total *= level;
    if (total > static_cast<double>(kMaxQuadraturePoints))
        throw ValidationError(fmt::format("quadrature with {}^{} points exceeds the cap of {}", level, spec.m_xi,
                                          kMaxQuadraturePoints));
    const GaussRule rule = gauss_legendre(level);
    const auto count = static_cast<std::size_t>(total);
    std::vector<Scenario> out;
    out.reserve(count);
    std::vector<std::size_t> idx(spec.m_xi, 0);
    for (std::size_t q = 0; q < count; ++q) {
        std::vector<double> xi(spec.m_xi);
        double w = 1.0;
        for (std::size_t j = 0; j < spec.m_xi; ++j) {
            xi[j] = std::clamp(rule.nodes[idx[j]], -1.0, 1.0);
            w *= 0.5 * rule.weights[idx[j]];
        }
        out.push_back({ParamVector(std::move(xi)), w});
        for (std::size_t j = spec.m_xi; j-- > 0;) {
            if (++idx[j] < static_cast<std::size_t>(level)) break;
            idx[j] = 0;
        }
    }
    double sum = 0.0;
    for (const auto& s : out) sum += s.weight;
    for (auto& s : out) s.weight /= sum;
    ScenarioProvenance p;
    p.kind = ScenarioProvenance::Kind::Quadrature;
    p.level = level;
    return ScenarioSet(std::move(out), p);
}

}  // namespace saapde
