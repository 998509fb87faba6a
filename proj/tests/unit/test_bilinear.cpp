#include <cmath>

#include <gtest/gtest.h>

#include "saapde/bilinear.hpp"
#include "saapde/errors.hpp"
#include "saapde/semilinear.hpp"
#include "support.hpp"

using namespace saapde;
using saapde::test::dense;
using saapde::test::random_function;
using saapde::test::rel_error;
using saapde::test::vec;

namespace {

constexpr double kCap = 10.0;

struct Fixture {
    GridPtr grid = make_grid(16);
    FieldSpec spec = FieldSpec::defaults(4, 50.0);
    GridConstants constants = estimate_constants(*grid);
    BilinearProblem problem{grid,
                            spec,
                            SemilinearProblem::default_target(grid, 1.0),
                            constant_field(grid, Layout::AllNodes, kCap),
                            {},
                            0.9,
                            constants};
    Eigen::MatrixXd a1 = dense(assemble_unit_stiffness(*grid));

    GridFunction control(std::uint64_t seed) const { return random_function(grid, Layout::AllNodes, seed, 0.0, kCap); }

    /// ||M r||_{H^{-1}} through a dense solve with the unit stiffness.
    double dual_norm(const GridFunction& r) const {
        const Eigen::VectorXd mr = grid->h() * grid->h() * vec(r.values());
        return std::sqrt(mr.dot(a1.ldlt().solve(mr)));
    }
};

const Fixture& fx() {
    static const Fixture f;
    return f;
}

}  // namespace

TEST(Bilinear, NeighbourhoodRadius) {
    const Fixture& f = fx();
    const BilinearBounds& b = f.problem.bounds();
    EXPECT_DOUBLE_EQ(b.delta, f.spec.kappa_min() / (2.0 * f.spec.g_max() * b.h01_l4 * b.h01_l4));
    EXPECT_DOUBLE_EQ(b.guard_radius, 0.9 * b.delta);
    EXPECT_DOUBLE_EQ(b.friedrichs, f.constants.friedrichs);
}

TEST(Bilinear, GuardRejectsFarControls) {
    const Fixture& f = fx();
    const GridFunction inside = f.control(1);
    EXPECT_EQ(f.problem.distance_to_admissible(inside), 0.0);
    EXPECT_NO_THROW(f.problem.check_neighborhood(inside));

    const GridFunction below = constant_field(f.grid, Layout::AllNodes, -0.5);
    EXPECT_NEAR(f.problem.distance_to_admissible(below), 0.5, 1e-14);
    const GridFunction far = constant_field(f.grid, Layout::AllNodes, -3.0);
    EXPECT_THROW(f.problem.check_neighborhood(far), OutOfNeighborhoodError);
    EXPECT_THROW(f.problem.value(far, ParamVector::zero(4)), OutOfNeighborhoodError);
}

TEST(Bilinear, StateSolvesDenseSystem) {
    const Fixture& f = fx();
    const GridFunction u = f.control(2);
    const ParamVector xi = draw_parameter(2, 0, 4);
    const GridFunction y = f.problem.solve_state(u, xi);
    const SparseOperator a = f.problem.system_operator(u, xi);
    const SampledFields s = f.problem.sampler().sample(xi);
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(f.grid->interior_count()));
    for (std::size_t i = 0; i < f.grid->interior_count(); ++i)
        rhs(static_cast<Eigen::Index>(i)) = f.grid->h() * f.grid->h() * s.b[f.grid->node_of_interior(i)];
    const Eigen::VectorXd oracle = dense(a).ldlt().solve(rhs);
    EXPECT_LT((vec(y.values()) - oracle).norm(), 1e-11 * oracle.norm());
}

TEST(Bilinear, AdjointGradientMatchesFiniteDifferences) {
    const Fixture& f = fx();
    for (std::uint64_t s = 0; s < 4; ++s) {
        const GridFunction u = f.control(10 + s);
        const ParamVector xi = draw_parameter(3, s, 4);
        const BilinearGradient g = f.problem.grad_p(u, xi);
        EXPECT_NEAR(g.value, f.problem.value(u, xi), 1e-13 * std::max(1.0, g.value));
        EXPECT_TRUE(std::isfinite(g.m_h1norm));
        for (std::uint64_t d = 0; d < 3; ++d) {
            const GridFunction dir = random_function(f.grid, Layout::AllNodes, 50 * s + d);
            const double h = 1e-5;
            const double fd = (f.problem.value(u + h * dir, xi) - f.problem.value(u - h * dir, xi)) / (2 * h);
            EXPECT_LT(rel_error(fd, l2_inner(g.grad, dir)), 1e-6);
        }
    }
}

TEST(Bilinear, StabilityBoundChain) {
    const Fixture& f = fx();
    const BilinearBounds& b = f.problem.bounds();
    const double kmin = f.spec.kappa_min();
    for (std::uint64_t s = 0; s < 100; ++s) {
        const GridFunction u = f.control(100 + s);
        const ParamVector xi = draw_parameter(4, s, 4);
        const GridFunction y = f.problem.solve_state(u, xi);
        const double b_norm = l2_norm(f.problem.sampler().sample(xi).b);
        EXPECT_LE(h01_seminorm(y), b.state_bound(b_norm) * (1 + 1e-10));
        EXPECT_LE(f.problem.objective(y), b.value_bound());
        const GridFunction z = f.problem.solve_adjoint(u, xi, y);
        EXPECT_LE(h01_seminorm(z), 2.0 / kmin * f.dual_norm(y - f.problem.target()) * (1 + 1e-10));
        EXPECT_LE(h01_seminorm(z), b.adjoint_bound() * (1 + 1e-10));
        EXPECT_LE(l2_norm(f.problem.grad_p(u, xi).grad), b.gradient_bound());
    }
}

TEST(Bilinear, SelfBoundAgainstDenseOracle) {
    const Fixture& f = fx();
    const double cd2 = f.constants.friedrichs * f.constants.friedrichs;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const GridFunction y = random_function(f.grid, Layout::Interior, 300 + s, -2.0, 2.0);
        const SelfBound sb = f.problem.self_bound_check(y);
        const double dn = f.dual_norm(y - f.problem.target());
        EXPECT_NEAR(sb.lhs, dn * dn, 1e-10 * sb.lhs);
        EXPECT_NEAR(sb.rhs, 2.0 * cd2 * f.problem.objective(y), 1e-14 * std::max(1.0, sb.rhs));
        EXPECT_LE(sb.lhs, sb.rhs * (1 + 1e-8));
    }
}

TEST(Bilinear, SelfBoundIsQuadraticallyHomogeneous) {
    const Fixture& f = fx();
    const GridFunction y = random_function(f.grid, Layout::Interior, 7);
    const GridFunction y2 = f.problem.target() + 2.0 * (y - f.problem.target());
    const SelfBound a = f.problem.self_bound_check(y);
    const SelfBound b = f.problem.self_bound_check(y2);
    EXPECT_NEAR(b.lhs, 4.0 * a.lhs, 1e-12 * b.lhs);
    EXPECT_NEAR(b.rhs, 4.0 * a.rhs, 1e-12 * b.rhs);
    const SelfBound zero = f.problem.self_bound_check(f.problem.target());
    EXPECT_EQ(zero.lhs, 0.0);
    EXPECT_EQ(zero.rhs, 0.0);
}

TEST(Bilinear, CoercivityMarginMatchesDenseOracle) {
    const Fixture& f = fx();
    for (std::uint64_t s = 0; s < 3; ++s) {
        const GridFunction u = f.control(400 + s);
        const ParamVector xi = draw_parameter(5, s, 4);
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(dense(f.problem.system_operator(u, xi)), f.a1,
                                                                     Eigen::EigenvaluesOnly);
        EXPECT_NEAR(f.problem.coercivity_margin(u, xi), es.eigenvalues()(0), 1e-8);
    }
}

TEST(Bilinear, CoercivityMarginAboveHalfKappaMin) {
    const Fixture& f = fx();
    for (std::uint64_t s = 0; s < 20; ++s) {
        const GridFunction u = f.control(500 + s);
        EXPECT_GE(f.problem.coercivity_margin(u, draw_parameter(6, s, 4)), 0.99 * f.spec.kappa_min() / 2.0);
    }
}

TEST(Bilinear, AttainedTargetGivesZeroGradient) {
    const Fixture& f = fx();
    const GridFunction u = f.control(8);
    const ParamVector xi = draw_parameter(8, 0, 4);
    const GridFunction y = f.problem.solve_state(u, xi);
    const BilinearProblem p(f.grid, f.spec, y, f.problem.upper(), {}, 0.9, f.constants);
    const BilinearGradient g = p.grad_p(u, xi);
    EXPECT_EQ(g.value, 0.0);
    for (double v : g.grad.values()) EXPECT_EQ(v, 0.0);
}

TEST(Bilinear, CgAndCholeskyAgree) {
    const Fixture& f = fx();
    const BilinearProblem cg(f.grid, f.spec, f.problem.target(), f.problem.upper(),
                             {LinearSolver::ConjugateGradient, 1e-13, 0}, 0.9, f.constants);
    const GridFunction u = f.control(9);
    const ParamVector xi = draw_parameter(9, 0, 4);
    EXPECT_LT(rel_error(f.problem.value(u, xi), cg.value(u, xi)), 1e-9);
}
