#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "saapde/errors.hpp"
#include "saapde/risk.hpp"
#include "support.hpp"

using namespace saapde;
using saapde::test::random_function;
using saapde::test::rel_error;

namespace {

/// t + E[(Z - t)_+] / (1 - beta), written out independently of the library.
double avar_in_t(const std::vector<double>& z, const std::vector<double>& w, double beta, double t) {
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) s += w[i] * std::max(z[i] - t, 0.0);
    return t + s / (1.0 - beta);
}

/// Golden-section minimisation of the convex function above on [min Z, max Z].
std::pair<double, double> golden_avar(const std::vector<double>& z, const std::vector<double>& w, double beta) {
    double a = *std::min_element(z.begin(), z.end());
    double b = *std::max_element(z.begin(), z.end());
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - r * (b - a), d = a + r * (b - a);
    double fc = avar_in_t(z, w, beta, c), fd = avar_in_t(z, w, beta, d);
    while (b - a > 1e-13 * std::max(1.0, std::abs(a) + std::abs(b))) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = avar_in_t(z, w, beta, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = avar_in_t(z, w, beta, d);
        }
    }
    const double t = 0.5 * (a + b);
    return {avar_in_t(z, w, beta, t), t};
}

std::vector<double> uniform_weights(std::size_t n) { return std::vector<double>(n, 1.0 / static_cast<double>(n)); }

}  // namespace

TEST(Avar, MatchesGoldenSectionOracle) {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::size_t> size(1, 100);
    std::normal_distribution<double> normal(0.0, 3.0);
    std::uniform_real_distribution<double> unit(0.1, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = size(rng);
        std::vector<double> z(n), w(n);
        for (auto& x : z) x = normal(rng);
        double total = 0.0;
        for (auto& x : w) total += (x = unit(rng));
        if (trial % 2 == 0) w = uniform_weights(n);
        else for (auto& x : w) x /= total;
        for (double beta : {0.1, 0.5, 0.9}) {
            const AvarValue v = avar_empirical(z, w, beta);
            const auto [oracle, t] = golden_avar(z, w, beta);
            EXPECT_NEAR(v.avar, oracle, 1e-9 * std::max(1.0, std::abs(oracle)))
                << "trial " << trial << " n " << n << " beta " << beta;
            // The library's minimiser set attains the same value.
            EXPECT_NEAR(avar_in_t(z, w, beta, v.t_star.lo), oracle, 1e-9 * std::max(1.0, std::abs(oracle)));
            EXPECT_NEAR(avar_in_t(z, w, beta, v.t_star.hi), oracle, 1e-9 * std::max(1.0, std::abs(oracle)));
            EXPECT_NEAR(avar_objective_in_t(z, w, beta, t), avar_in_t(z, w, beta, t), 1e-12 * std::max(1.0, oracle));
        }
    }
}

TEST(Avar, WorstHalfOfFourValues) {
    const std::vector<double> z{4.0, 1.0, 3.0, 2.0};
    const AvarValue v = avar_empirical(z, uniform_weights(4), 0.5);
    EXPECT_DOUBLE_EQ(v.avar, 3.5);
    EXPECT_DOUBLE_EQ(v.t_star.lo, 2.0);
    EXPECT_DOUBLE_EQ(v.t_star.hi, 3.0);
}

TEST(Avar, SingleValueAndConstants) {
    EXPECT_DOUBLE_EQ(avar_empirical(std::vector<double>{2.5}, std::vector<double>{1.0}, 0.9).avar, 2.5);
    const std::vector<double> c(7, -1.25);
    EXPECT_DOUBLE_EQ(avar_empirical(c, uniform_weights(7), 0.3).avar, -1.25);
}

TEST(Avar, BoundedByMeanAndMaximum) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> z(37);
        for (auto& x : z) x = normal(rng);
        const auto w = uniform_weights(z.size());
        double mean = 0.0;
        for (double x : z) mean += x / static_cast<double>(z.size());
        const double lo = avar_empirical(z, w, 0.01).avar;
        const double hi = avar_empirical(z, w, 0.99).avar;
        EXPECT_GE(lo, mean - 1e-12);
        EXPECT_LE(hi, *std::max_element(z.begin(), z.end()) + 1e-12);
        EXPECT_LE(lo, hi);
    }
}

TEST(Avar, CoherenceExactOnIntegerBatteries) {
    // Dyadic weights and levels keep every operation exact.
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> value(-50, 50);
    for (std::size_t n : {1u, 2u, 4u, 8u, 16u, 32u, 64u}) {
        const auto w = uniform_weights(n);
        for (double beta : {0.5, 0.75, 0.875}) {
            for (int trial = 0; trial < 5; ++trial) {
                std::vector<double> z(n), larger(n), shifted(n), scaled(n);
                for (std::size_t i = 0; i < n; ++i) {
                    z[i] = value(rng);
                    larger[i] = z[i] + std::uniform_int_distribution<int>(0, 3)(rng);
                    shifted[i] = z[i] + 7.0;
                    scaled[i] = 3.0 * z[i];
                }
                const double base = avar_empirical(z, w, beta).avar;
                EXPECT_LE(base, avar_empirical(larger, w, beta).avar);
                EXPECT_EQ(avar_empirical(shifted, w, beta).avar, base + 7.0);
                EXPECT_EQ(avar_empirical(scaled, w, beta).avar, 3.0 * base);
            }
        }
    }
}

TEST(Avar, RejectsBadInput) {
    const std::vector<double> z{1.0, 2.0};
    EXPECT_THROW(avar_empirical(z, uniform_weights(2), 0.0), ValidationError);
    EXPECT_THROW(avar_empirical(z, uniform_weights(2), 1.0), ValidationError);
    EXPECT_THROW(avar_empirical(z, std::vector<double>{0.7, 0.7}, 0.5), ValidationError);
    EXPECT_THROW(avar_empirical(z, uniform_weights(3), 0.5), ValidationError);
}

TEST(Interval, Distance) {
    const Interval i{-1.0, 2.0};
    EXPECT_EQ(i.distance(0.0), 0.0);
    EXPECT_EQ(i.distance(3.5), 1.5);
    EXPECT_EQ(i.distance(-4.0), 3.0);
    EXPECT_TRUE(Interval::point(1.0).contains(1.0));
}

TEST(Regularizer, ProxExamples) {
    const auto g = make_grid(4);
    const RegularizerSpec r = RegularizerSpec::box(g, 0.0, 10.0, 1.0);
    const GridFunction half = r.prox(constant_field(g, Layout::AllNodes, 1.0), 1.0);
    for (double x : half.values()) EXPECT_DOUBLE_EQ(x, 0.5);
    const GridFunction capped = prox_psi(r, constant_field(g, Layout::AllNodes, 30.0), 1.0);
    for (double x : capped.values()) EXPECT_DOUBLE_EQ(x, 10.0);
    const GridFunction floored = r.prox(constant_field(g, Layout::AllNodes, -3.0), 0.5);
    for (double x : floored.values()) EXPECT_DOUBLE_EQ(x, 0.0);

    const RegularizerSpec plain = RegularizerSpec::box(g, -5.0, 5.0, 0.0);
    const GridFunction inside = random_function(g, Layout::AllNodes, 3, -4.0, 4.0);
    const GridFunction p = plain.prox(inside, 2.0);
    for (std::size_t k = 0; k < p.size(); ++k) EXPECT_EQ(p[k], inside[k]);
}

TEST(Regularizer, ProxIsMinimiser) {
    // prox minimises gamma psi(w) + ||w - v||^2 / 2 nodewise; compare with
    // perturbations that stay in the box.
    const auto g = make_grid(6);
    const RegularizerSpec r = RegularizerSpec::box(g, -1.0, 2.0, 0.3);
    const GridFunction v = random_function(g, Layout::AllNodes, 9, -4.0, 4.0);
    const double gamma = 0.7;
    const GridFunction p = r.prox(v, gamma);
    auto obj = [&](const GridFunction& w) {
        const double d = l2_norm(w - v);
        return gamma * r.value(w) + 0.5 * d * d;
    };
    for (std::uint64_t s = 0; s < 20; ++s) {
        const GridFunction w = r.project(p + 0.1 * random_function(g, Layout::AllNodes, 100 + s));
        EXPECT_LE(obj(p), obj(w) + 1e-14);
    }
}

TEST(Regularizer, BoxGeometry) {
    const auto g = make_grid(8);
    const RegularizerSpec r = RegularizerSpec::box(g, -20.0, 20.0, 1e-3);
    EXPECT_DOUBLE_EQ(r.radius(), 20.0);
    EXPECT_TRUE(r.contains(constant_field(g, Layout::AllNodes, 20.0)));
    const GridFunction out = constant_field(g, Layout::AllNodes, 21.0);
    EXPECT_FALSE(r.contains(out));
    EXPECT_NEAR(r.distance_to_box(out), 1.0, 1e-13);
    EXPECT_TRUE(r.contains(r.project(out)));
    EXPECT_NEAR(r.value(constant_field(g, Layout::AllNodes, 2.0)), 0.5e-3 * 4.0, 1e-15);
    EXPECT_THROW(RegularizerSpec::box(g, 1.0, 0.0, 1.0), ValidationError);
    EXPECT_THROW(RegularizerSpec::box(g, 0.0, 1.0, -1.0), ValidationError);
}

TEST(Ordering, OrderedSumIsScheduleFree) {
    std::vector<double> v = saapde::test::random_vector(1001, 4, -1e8, 1e8);
    const double a = ordered_sum(v);
    EXPECT_EQ(a, ordered_sum(v));
    double naive = 0.0;
    for (double x : v) naive += x;
    EXPECT_NEAR(a, naive, 1e-6 * 1e8);
}

namespace {

struct SaaFixture {
    GridPtr grid = make_grid(8);
    FieldSpec spec = FieldSpec::defaults(4, 50.0);
    std::shared_ptr<const SemilinearProblem> semi =
        std::make_shared<SemilinearProblem>(grid, spec, SemilinearProblem::default_target(grid, 1.0));
    GridConstants constants = estimate_constants(*grid);
    std::shared_ptr<const BilinearProblem> bil = std::make_shared<BilinearProblem>(
        grid, spec, SemilinearProblem::default_target(grid, 1.0), constant_field(grid, Layout::AllNodes, 10.0),
        SolveOptions{}, 0.9, constants);
    RegularizerSpec semi_reg = RegularizerSpec::box(grid, -20.0, 20.0, 1e-3);
    RegularizerSpec bil_reg = RegularizerSpec::box(grid, 0.0, 10.0, 1e-2);
};

const SaaFixture& sfx() {
    static const SaaFixture f;
    return f;
}

}  // namespace

TEST(AvarSaa, ValueIsAvarOfScenarioValuesPlusRegulariser) {
    const SaaFixture& f = sfx();
    const AvarSaaProblem saa(f.semi, monte_carlo(f.spec, 3, 12), f.semi_reg, {0.7, 1e-10});
    const GridFunction u = random_function(f.grid, Layout::AllNodes, 1, -5.0, 5.0);
    const Evaluation e = saa.evaluate(u);
    std::vector<double> z;
    for (const auto& s : saa.scenarios().scenarios()) z.push_back(f.semi->value(u, s.xi));
    const AvarValue ref = avar_empirical(z, saa.scenarios().weights(), 0.7);
    EXPECT_NEAR(e.smooth, ref.avar, 1e-12 * std::max(1.0, ref.avar));
    ASSERT_TRUE(e.t.has_value());
    EXPECT_DOUBLE_EQ(*e.t, ref.t_star.mid());
    EXPECT_NEAR(e.total(), ref.avar + f.semi_reg.value(u), 1e-12);
    EXPECT_NEAR(saa_avar_objective(saa, {u, 0.3}), avar_in_t(z, saa.scenarios().weights(), 0.7, 0.3) + f.semi_reg.value(u),
                1e-12);
}

TEST(AvarSaa, SubgradientOffKinkMatchesFiniteDifferences) {
    const SaaFixture& f = sfx();
    const AvarSaaProblem saa(f.semi, monte_carlo(f.spec, 4, 10), f.semi_reg);
    const GridFunction u = random_function(f.grid, Layout::AllNodes, 2, -5.0, 5.0);
    // A t away from every scenario value keeps the objective smooth nearby.
    Evaluation probe = saa.evaluate(u);
    std::vector<double> z = probe.scenario_values;
    std::sort(z.begin(), z.end());
    const double t = 0.5 * (z[4] + z[5]);
    const SubgradientElement g = saa_avar_subgradient(saa, {u, t});
    EXPECT_EQ(g.t_interval.width(), 0.0);
    const double h = 1e-6;
    for (std::uint64_t d = 0; d < 3; ++d) {
        const GridFunction dir = random_function(f.grid, Layout::AllNodes, 20 + d);
        const double fd = (saa.evaluate(u + h * dir, t).smooth - saa.evaluate(u - h * dir, t).smooth) / (2 * h);
        EXPECT_LT(rel_error(fd, l2_inner(g.g_u, dir)), 1e-6);
    }
    const double fd_t = (saa.evaluate(u, t + h).smooth - saa.evaluate(u, t - h).smooth) / (2 * h);
    EXPECT_NEAR(fd_t, g.t_interval.lo, 1e-6);
    EXPECT_DOUBLE_EQ(g.t_selected, g.t_interval.lo);
}

TEST(AvarSaa, ExactTMinimisationPutsZeroInTSlot) {
    const SaaFixture& f = sfx();
    for (double beta : {0.25, 0.5, 0.9}) {
        const AvarSaaProblem saa(f.semi, monte_carlo(f.spec, 5, 16), f.semi_reg, {beta, 1e-10});
        const Evaluation e = saa.evaluate_with_gradient(random_function(f.grid, Layout::AllNodes, 3, -5.0, 5.0));
        EXPECT_TRUE(e.sub.t_interval.contains(0.0)) << "beta " << beta;
        EXPECT_TRUE(e.sub.t_interval.contains(e.sub.t_selected))
            << e.sub.t_interval.lo << " " << e.sub.t_interval.hi << " " << e.sub.t_selected;
        EXPECT_NEAR(e.sub.t_selected, 0.0, 1e-12);
        for (std::size_t i = 0; i < e.sub.theta.size(); ++i)
            EXPECT_TRUE(e.sub.theta[i].contains(e.sub.theta_selected[i]));
    }
}

TEST(AvarSaa, ThreadCountDoesNotChangeBits) {
    const SaaFixture& f = sfx();
    const ScenarioSet s = monte_carlo(f.spec, 6, 24);
    const AvarSaaProblem one(f.semi, s, f.semi_reg, {}, 1);
    const AvarSaaProblem four(f.semi, s, f.semi_reg, {}, 4);
    const GridFunction u = random_function(f.grid, Layout::AllNodes, 4, -5.0, 5.0);
    const Evaluation a = one.evaluate_with_gradient(u);
    const Evaluation b = four.evaluate_with_gradient(u);
    EXPECT_EQ(a.smooth, b.smooth);
    EXPECT_EQ(*a.t, *b.t);
    for (std::size_t k = 0; k < a.sub.g_u.size(); ++k) EXPECT_EQ(a.sub.g_u[k], b.sub.g_u[k]);
}

TEST(BilinearSaa, WeightedAverageAndGradient) {
    const SaaFixture& f = sfx();
    const BilinearSaaProblem saa(f.bil, quadrature(f.spec, 2), f.bil_reg, 2);
    EXPECT_FALSE(saa.has_t());
    const GridFunction u = random_function(f.grid, Layout::AllNodes, 5, 0.0, 10.0);
    const ValueAndGradient vg = saa_bilinear_objective_gradient(saa, u);
    double expected = f.bil_reg.value(u);
    for (const auto& s : saa.scenarios().scenarios()) expected += s.weight * f.bil->value(u, s.xi);
    EXPECT_NEAR(vg.value, expected, 1e-12 * expected);
    const double h = 1e-5;
    for (std::uint64_t d = 0; d < 3; ++d) {
        const GridFunction dir = random_function(f.grid, Layout::AllNodes, 30 + d);
        const double fd = (saa.evaluate(u + h * dir).smooth - saa.evaluate(u - h * dir).smooth) / (2 * h);
        EXPECT_LT(rel_error(fd, l2_inner(vg.grad, dir)), 1e-6);
    }
    EXPECT_TRUE(std::isfinite(saa.max_m_h1norm(u)));
    EXPECT_EQ(saa.restricted(3)->scenarios().size(), 3u);
}
