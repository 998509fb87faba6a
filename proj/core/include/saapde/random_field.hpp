#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "saapde/grid.hpp"

namespace saapde {

/// Realisation of the random parameter, xi in [-1, 1]^m.
class ParamVector {
public:
    ParamVector() = default;
    explicit ParamVector(std::vector<double> components);
    static ParamVector zero(std::size_t dim) { return ParamVector(std::vector<double>(dim, 0.0)); }

    std::size_t size() const noexcept { return xi_.size(); }
    double operator[](std::size_t j) const { return xi_[j]; }
    std::span<const double> components() const noexcept { return xi_; }

    friend bool operator==(const ParamVector&, const ParamVector&) = default;

private:
    std::vector<double> xi_;
};

/// Affine expansions of the random coefficients in the cosine modes
/// phi_j(x) = cos(j pi x1) cos(j pi x2):
///
///   kappa(xi) = kappa0 + sum_j xi_j a_j phi_j
///   g(xi)     = g0     + sum_j xi_j c_j phi_j
///   b(xi)     = b0     + sum_j xi_j d_j phi_j,   b0 = load_peak * 16 x1 x2 (1-x1)(1-x2)
///
/// Since |phi_j| <= 1 and |xi_j| <= 1 every coefficient bound follows from the
/// amplitude sums.
struct FieldSpec {
    std::size_t m_xi = 4;
    double kappa0 = 1.0;
    std::vector<double> kappa_amplitudes;
    double g0 = 1.0;
    std::vector<double> g_amplitudes;
    double load_peak = 0.5;
    std::vector<double> load_amplitudes;

    /// Amplitudes decaying like 1/j with sums 0.5 (kappa), 0.5 (g) and
    /// load_fraction * load_peak (b).
    static FieldSpec defaults(std::size_t m_xi = 4, double load_peak = 0.5, double load_fraction = 0.25);

    /// Throws CoefficientBoundError/ValidationError when kappa_min <= 0,
    /// g may become negative, or amplitude counts differ from m_xi.
    void validate() const;

    double kappa_min() const;
    double kappa_max() const;
    double g_min() const;
    double g_max() const;
    /// Certified bound on the (lumped, all-node) L2 norm of b(xi) over all xi.
    double b_max(const Grid2D& grid) const;
};

double cosine_mode(std::size_t j, double x1, double x2);

struct SampledFields {
    CellField kappa;
    CellField g;
    GridFunction b;  // all nodes
};

/// Mode values tabulated once per (spec, grid); sampling is then a few axpys.
class FieldSampler {
public:
    FieldSampler(FieldSpec spec, GridPtr grid);

    const FieldSpec& spec() const noexcept { return spec_; }
    const GridPtr& grid() const noexcept { return grid_; }

    SampledFields sample(const ParamVector& xi) const;
    std::vector<double> kappa_cells(const ParamVector& xi) const;
    std::vector<double> g_cells(const ParamVector& xi) const;
    std::vector<double> load_nodes(const ParamVector& xi) const;

private:
    void check(const ParamVector& xi) const;

    FieldSpec spec_;
    GridPtr grid_;
    std::vector<std::vector<double>> cell_modes_;
    std::vector<std::vector<double>> node_modes_;
    std::vector<double> base_load_;
};

SampledFields sample_fields(const FieldSpec& spec, const ParamVector& xi, const GridPtr& grid);

struct Scenario {
    ParamVector xi;
    double weight = 0.0;
};

struct ScenarioProvenance {
    enum class Kind { MonteCarlo, Quadrature, Explicit } kind = Kind::Explicit;
    std::uint64_t seed = 0;
    std::size_t count = 0;
    int level = 0;
    std::string describe() const;
};

/// Weighted scenario list standing in for the probability measure.
class ScenarioSet {
public:
    ScenarioSet() = default;
    ScenarioSet(std::vector<Scenario> scenarios, ScenarioProvenance provenance);

    std::size_t size() const noexcept { return scenarios_.size(); }
    const Scenario& operator[](std::size_t i) const { return scenarios_[i]; }
    std::span<const Scenario> scenarios() const noexcept { return scenarios_; }
    const ScenarioProvenance& provenance() const noexcept { return provenance_; }
    std::vector<double> weights() const;

    /// First k scenarios with weights renormalised to one.
    ScenarioSet leading(std::size_t k) const;

private:
    std::vector<Scenario> scenarios_;
    ScenarioProvenance provenance_;
};

/// Draw `index` of stream `seed`; a pure function of (seed, index), which gives
/// the prefix property monte_carlo(s, N) within monte_carlo(s, 2N).
ParamVector draw_parameter(std::uint64_t seed, std::uint64_t index, std::size_t m_xi);

ScenarioSet monte_carlo(const FieldSpec& spec, std::uint64_t seed, std::size_t count);

struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;  // sum to 2 on [-1, 1]
};
GaussRule gauss_legendre(int points);

/// Tensor Gauss-Legendre rule with `level` points per direction, normalised
/// to the uniform probability measure on [-1, 1]^m.
ScenarioSet quadrature(const FieldSpec& spec, int level);

inline constexpr std::size_t kMaxQuadraturePoints = 1'000'000;

}  // namespace saapde
