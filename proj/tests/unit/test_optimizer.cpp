#include <cmath>

#include <gtest/gtest.h>

#include "saapde/errors.hpp"
#include "saapde/experiments.hpp"
#include "saapde/optimizer.hpp"
#include "support.hpp"

using namespace saapde;
using saapde::test::random_function;

namespace {

const Model& small_model() {
    static const Model m = [] {
        ModelSettings s;
        s.n = 8;
        return Model(s);
    }();
    return m;
}

std::vector<double> values_of(const GridFunction& f) { return {f.values().begin(), f.values().end()}; }

StationaryPoint point_at(const GridPtr& g, double value, double objective) {
    StationaryPoint p;
    p.u = constant_field(g, Layout::AllNodes, value);
    p.objective = objective;
    return p;
}

}  // namespace

TEST(Residual, ZeroWhenGradientPushesOutOfTheBox) {
    const auto g = make_grid(4);
    const RegularizerSpec box = RegularizerSpec::box(g, 0.0, 1.0, 0.0);
    SubgradientElement e;
    e.g_u = constant_field(g, Layout::AllNodes, 1.0);
    const GridFunction u = constant_field(g, Layout::AllNodes, 0.0);
    EXPECT_EQ(stationarity_residual(e, u, box, 0.5, false), 0.0);
    // An interior point with a nonzero gradient is not stationary.
    const GridFunction mid = constant_field(g, Layout::AllNodes, 0.5);
    EXPECT_NEAR(stationarity_residual(e, mid, box, 0.1, false), l2_norm(e.g_u), 1e-14);
}

TEST(Residual, ZeroAtProxFixedPointAndTTermAdds) {
    const auto g = make_grid(4);
    const RegularizerSpec reg = RegularizerSpec::box(g, -2.0, 2.0, 1.0);
    // With alpha = 1 and g = -u the point u is a fixed point of the prox map.
    const GridFunction u = random_function(g, Layout::AllNodes, 3, -1.0, 1.0);
    SubgradientElement e;
    e.g_u = -1.0 * u;
    e.t_interval = {-0.25, 0.5};
    EXPECT_NEAR(stationarity_residual(e, u, reg, 0.3, true), 0.0, 1e-14);
    e.t_interval = {0.25, 0.5};
    EXPECT_NEAR(stationarity_residual(e, u, reg, 0.3, true), 0.25, 1e-14);
    EXPECT_NEAR(stationarity_residual(e, u, reg, 0.3, false), 0.0, 1e-14);
}

TEST(Solver, ConvergedPointsMeetToleranceOnRecomputation) {
    const Model& m = small_model();
    for (ProblemKind kind : {ProblemKind::Bilinear, ProblemKind::SemilinearAvar}) {
        const auto f = m.objective(kind, monte_carlo(m.settings().fields, 3, 16));
        SolverConfig cfg;
        cfg.tol = 1e-7;
        const StationaryPoint p = solve(*f, cfg, m.default_start(kind));
        ASSERT_TRUE(p.converged) << to_string(kind);
        EXPECT_LE(p.residual, cfg.tol);
        EXPECT_TRUE(m.regularizer(kind).contains(p.u));
        const Evaluation e = f->evaluate_with_gradient(p.u, p.t);
        EXPECT_NEAR(stationarity_residual(*f, e, p.gamma_probe), p.residual, 1e-12);
        EXPECT_LE(stationarity_residual(*f, e, p.gamma_probe), cfg.tol);
        EXPECT_EQ(p.t.has_value(), f->has_t());
        EXPECT_NEAR(p.objective, e.total(), 1e-12 * std::max(1.0, std::abs(p.objective)));
    }
}

TEST(Solver, StrongRegularisationGivesOneCluster) {
    ModelSettings s;
    s.n = 8;
    s.bilinear.alpha = 10.0;
    const Model m(s);
    const auto f = m.objective(ProblemKind::Bilinear, monte_carlo(s.fields, 4, 8));
    SolverConfig cfg;
    cfg.tol = 1e-9;
    std::vector<StationaryPoint> points;
    for (const GridFunction& u0 : start_points(m.regularizer(ProblemKind::Bilinear),
                                               m.default_start(ProblemKind::Bilinear), 4, 11)) {
        points.push_back(solve(*f, cfg, u0));
        ASSERT_TRUE(points.back().converged);
    }
    EXPECT_EQ(multistart_cluster(points, 1e-6).size(), 1u);
}

TEST(Solver, IterationCapReportsNonConvergence) {
    const Model& m = small_model();
    const auto f = m.objective(ProblemKind::Bilinear, monte_carlo(m.settings().fields, 3, 8));
    SolverConfig cfg;
    cfg.tol = 1e-14;
    cfg.max_iterations = 1;
    const StationaryPoint p = solve(*f, cfg, m.default_start(ProblemKind::Bilinear));
    EXPECT_FALSE(p.converged);
    EXPECT_GT(p.residual, cfg.tol);
}

TEST(Solver, RejectsStartOutsideBox) {
    const Model& m = small_model();
    const auto f = m.objective(ProblemKind::Bilinear, monte_carlo(m.settings().fields, 3, 8));
    EXPECT_THROW(solve(*f, {}, constant_field(m.grid(), Layout::AllNodes, 50.0)), ValidationError);
}

TEST(Solver, LipschitzEstimateIsPositiveAndDeterministic) {
    const Model& m = small_model();
    const auto f = m.objective(ProblemKind::SemilinearAvar, monte_carlo(m.settings().fields, 3, 8));
    const GridFunction u = m.default_start(ProblemKind::SemilinearAvar);
    const double a = estimate_lipschitz(*f, u, 6, 5);
    EXPECT_GT(a, 0.0);
    EXPECT_EQ(a, estimate_lipschitz(*f, u, 6, 5));
}

TEST(Cluster, CountIsMonotoneInTolerance) {
    const auto g = make_grid(4);
    // Node values 0, 1, 1.5, 4, 4.2: distances scale with the lumped L2 norm of 1.
    std::vector<StationaryPoint> pts{point_at(g, 0.0, 3.0), point_at(g, 4.0, 1.0), point_at(g, 1.0, 2.0),
                                     point_at(g, 4.2, 0.5), point_at(g, 1.5, 2.5)};
    std::size_t previous = pts.size() + 1;
    for (double tol : {0.01, 0.3, 0.6, 1.2, 2.6, 10.0}) {
        const std::size_t count = multistart_cluster(pts, tol).size();
        EXPECT_LE(count, previous) << "tol " << tol;
        previous = count;
    }
    // Single linkage joins 0 -> 1 -> 1.5 through the chain at tol 1.1.
    const auto reps = multistart_cluster(pts, 1.1);
    ASSERT_EQ(reps.size(), 2u);
    EXPECT_EQ(reps[0].objective, 2.0);
    EXPECT_EQ(reps[1].objective, 0.5);
    EXPECT_EQ(multistart_cluster(pts, 10.0).size(), 1u);
    EXPECT_EQ(multistart_cluster(pts, 0.01).size(), 5u);
}

TEST(Cluster, PointDistanceIncludesT) {
    const auto g = make_grid(4);
    StationaryPoint a = point_at(g, 0.0, 0.0), b = point_at(g, 3.0, 0.0);
    EXPECT_NEAR(point_distance(a, b), 3.0, 1e-14);
    a.t = 1.0;
    b.t = -1.0;
    EXPECT_NEAR(point_distance(a, b), 5.0, 1e-14);
}

TEST(StartPoints, FirstIsGivenAndAllInBox) {
    const auto g = make_grid(6);
    const RegularizerSpec reg = RegularizerSpec::box(g, -3.0, 2.0, 0.0);
    const GridFunction u0 = constant_field(g, Layout::AllNodes, 0.5);
    const auto starts = start_points(reg, u0, 5, 9);
    ASSERT_EQ(starts.size(), 5u);
    EXPECT_EQ(values_of(starts[0]), values_of(u0));
    for (const auto& s : starts) EXPECT_TRUE(reg.contains(s));
    EXPECT_NE(values_of(starts[1]), values_of(starts[2]));
    EXPECT_EQ(values_of(start_points(reg, u0, 5, 9)[3]), values_of(starts[3]));
}
