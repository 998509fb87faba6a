#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "saapde/errors.hpp"
#include "saapde/grid.hpp"
#include "support.hpp"

using namespace saapde;
using saapde::test::dense;
using saapde::test::vec;

namespace {

/// Five-point Laplacian on the interior nodes, which P1 elements on this
/// triangulation reproduce exactly for unit diffusion.
Eigen::MatrixXd five_point(int n) {
    const int m = n - 1;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m * m, m * m);
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < m; ++i) {
            const int k = i + j * m;
            a(k, k) = 4.0;
            if (i > 0) a(k, k - 1) = -1.0;
            if (i + 1 < m) a(k, k + 1) = -1.0;
            if (j > 0) a(k, k - m) = -1.0;
            if (j + 1 < m) a(k, k + m) = -1.0;
        }
    return a;
}

CellField random_kappa(const GridPtr& g, std::uint64_t seed) {
    return CellField(g, saapde::test::random_vector(g->cell_count(), seed, 0.5, 1.5));
}

}  // namespace

TEST(Grid, CountsAndNumbering) {
    const auto g = make_grid(4);
    EXPECT_EQ(g->node_count(), 25u);
    EXPECT_EQ(g->interior_count(), 9u);
    EXPECT_EQ(g->cell_count(), 32u);
    EXPECT_EQ(g->interior_index(0), -1);
    EXPECT_EQ(g->interior_index(6), 0);  // node (1, 1)
    for (std::size_t k = 0; k < g->interior_count(); ++k)
        EXPECT_EQ(g->interior_index(g->node_of_interior(k)), static_cast<std::int64_t>(k));
    const auto x = g->node_coords(7);
    EXPECT_DOUBLE_EQ(x[0], 0.5);
    EXPECT_DOUBLE_EQ(x[1], 0.25);
    EXPECT_THROW(make_grid(1), ValidationError);
}

TEST(Grid, LumpedMassSumsToArea) {
    for (int n : {2, 5, 16}) {
        const auto g = make_grid(n);
        double total = 0.0;
        for (double m : g->lumped_mass_all()) total += m;
        EXPECT_NEAR(total, 1.0, 1e-14);
        for (double m : g->lumped_mass_interior()) EXPECT_DOUBLE_EQ(m, g->h() * g->h());
    }
}

TEST(Grid, UnitStiffnessIsFivePointLaplacian) {
    for (int n : {3, 6, 9}) {
        const auto g = make_grid(n);
        const Eigen::MatrixXd k = dense(assemble_unit_stiffness(*g));
        EXPECT_LT((k - five_point(n)).cwiseAbs().maxCoeff(), 1e-13);
    }
}

TEST(Grid, StiffnessSymmetricPositiveDefinite) {
    const auto g = make_grid(8);
    const SparseOperator a = assemble_stiffness(*g, random_kappa(g, 3));
    EXPECT_TRUE(a.is_symmetric());
    EXPECT_EQ(a.bandwidth(), static_cast<std::size_t>(g->n()));
    const Eigen::MatrixXd d = dense(a);
    EXPECT_LT((d - d.transpose()).cwiseAbs().maxCoeff(), 1e-14);
    Eigen::LLT<Eigen::MatrixXd> llt(d);
    EXPECT_EQ(llt.info(), Eigen::Success);
}

TEST(Grid, EnergyMatchesElementwiseGradient) {
    const auto g = make_grid(7);
    const SparseOperator a = assemble_unit_stiffness(*g);
    const GridFunction f = saapde::test::random_function(g, Layout::Interior, 11);
    const double s = h01_seminorm(f);
    EXPECT_NEAR(a.energy(f.values()), s * s, 1e-12);
}

TEST(Grid, NonPositiveDiffusionRejected) {
    const auto g = make_grid(4);
    std::vector<double> k(g->cell_count(), 1.0);
    k[5] = 0.0;
    EXPECT_THROW(assemble_stiffness(*g, CellField(g, k)), CoefficientBoundError);
}

TEST(Grid, SolversAgreeWithDenseOracle) {
    const auto g = make_grid(10);
    const SparseOperator a =
        assemble_stiffness(*g, random_kappa(g, 5)).plus_diagonal(saapde::test::random_vector(g->interior_count(), 6, 0.0, 0.01));
    const auto rhs = saapde::test::random_vector(g->interior_count(), 7);
    const Eigen::VectorXd oracle = dense(a).ldlt().solve(vec(rhs));

    const auto chol = BandedCholesky(a).solve(rhs);
    EXPECT_LT((vec(chol) - oracle).norm() / oracle.norm(), 1e-12);

    const SolveReport cg = conjugate_gradient(a, rhs, 1e-12, 1000);
    EXPECT_LT((vec(cg.x) - oracle).norm() / oracle.norm(), 1e-10);
    EXPECT_LE(cg.relative_residual, 1e-12);

    const SolveReport via = solve_spd(a, rhs, {LinearSolver::ConjugateGradient, 1e-12, 0});
    EXPECT_LT((vec(via.x) - oracle).norm() / oracle.norm(), 1e-10);
}

TEST(Grid, CgIterationCapThrows) {
    const auto g = make_grid(16);
    const SparseOperator a = assemble_unit_stiffness(*g);
    const auto rhs = saapde::test::random_vector(g->interior_count(), 8);
    EXPECT_THROW(conjugate_gradient(a, rhs, 1e-14, 2), NonConvergenceError);
}

TEST(Grid, FriedrichsConstantMatchesDiscreteEigenvalue) {
    for (int n : {4, 8, 16}) {
        const auto g = make_grid(n);
        const double h = g->h();
        const double s = std::sin(std::numbers::pi * h / 2.0);
        const double lambda = 8.0 * s * s / (h * h);  // lowest eigenvalue of K against h^2 I
        const GridConstants c = estimate_constants(*g);
        EXPECT_NEAR(c.lambda_min, lambda, 1e-7 * lambda);
        EXPECT_NEAR(c.friedrichs, 1.0 / std::sqrt(lambda), 1e-7);
        EXPECT_GT(c.h01_l4, 0.0);
    }
}

TEST(Grid, FriedrichsInequalityHoldsForRandomFields) {
    const auto g = make_grid(16);
    const GridConstants c = estimate_constants(*g);
    for (std::uint64_t s = 0; s < 50; ++s) {
        const GridFunction f = saapde::test::random_function(g, Layout::Interior, 100 + s);
        EXPECT_LE(l2_norm(f), c.friedrichs * h01_seminorm(f) * (1.0 + 1e-10));
    }
}

TEST(Grid, GeneralizedEigenpairMatchesDenseOracle) {
    const auto g = make_grid(6);
    const SparseOperator a = assemble_stiffness(*g, random_kappa(g, 9));
    const SparseOperator b = assemble_unit_stiffness(*g);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(dense(a), dense(b));
    const EigenPair p = smallest_generalized_eigenpair(a, b, 1e-12);
    EXPECT_NEAR(p.value, es.eigenvalues()(0), 1e-9);

    const auto diag = saapde::test::random_vector(g->interior_count(), 10, 0.5, 2.0);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es2(dense(a), vec(diag).asDiagonal().toDenseMatrix());
    EXPECT_NEAR(smallest_generalized_eigenpair(a, diag, 1e-12).value, es2.eigenvalues()(0), 1e-9);
}

TEST(Grid, NormsOfSimpleFields) {
    const auto g = make_grid(8);
    const GridFunction one(g, Layout::AllNodes, std::vector<double>(g->node_count(), 1.0));
    EXPECT_NEAR(l2_norm(one), 1.0, 1e-14);
    EXPECT_NEAR(h01_seminorm(one), 0.0, 1e-14);
    EXPECT_NEAR(l4_norm(one), 1.0, 1e-14);

    // P1 reproduces x1 exactly, so its gradient norm is one.
    GridFunction x1(g, Layout::AllNodes);
    for (std::size_t k = 0; k < g->node_count(); ++k) x1[k] = g->node_coords(k)[0];
    EXPECT_NEAR(h01_seminorm(x1), 1.0, 1e-13);
    EXPECT_NEAR(norms(x1).h01, 1.0, 1e-13);
}

TEST(Grid, LayoutConversions) {
    const auto g = make_grid(5);
    const GridFunction f = saapde::test::random_function(g, Layout::Interior, 12);
    const GridFunction all = f.to_all_nodes();
    EXPECT_EQ(all.layout(), Layout::AllNodes);
    for (std::size_t k = 0; k < g->node_count(); ++k)
        if (g->interior_index(k) < 0) {
            EXPECT_EQ(all[k], 0.0);
        }
    const GridFunction back = all.to_interior();
    for (std::size_t k = 0; k < f.size(); ++k) EXPECT_EQ(back[k], f[k]);
    EXPECT_NEAR(l2_norm(all), l2_norm(f), 1e-14);

    GridFunction sum = f + f;
    sum -= f;
    sum *= 2.0;
    for (std::size_t k = 0; k < f.size(); ++k) EXPECT_DOUBLE_EQ(sum[k], 2.0 * f[k]);
    EXPECT_THROW(f + all, ValidationError);
}
