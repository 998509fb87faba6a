#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace saapde {

/// Which node set a nodal field lives on. States and adjoints carry the
/// homogeneous Dirichlet condition and are stored on interior nodes only;
/// controls live on every node of the mesh.
enum class Layout { Interior, AllNodes };

struct Cell {
    std::array<std::size_t, 3> nodes;  // all-node indices, counter-clockwise
    std::array<double, 2> midpoint;    // centroid, used for coefficient sampling
};

/// Uniform Friedrichs-Keller triangulation of the unit square with n cells per
/// side. Node (i, j) sits at (i h, j h); its all-node index is j (n+1) + i.
/// Interior nodes are numbered lexicographically, (i-1) + (j-1) (n-1).
///
/// The grid owns the sparsity pattern of the interior stiffness matrix and a
/// scatter map from element matrices into it, so that per-sample assembly is a
/// plain accumulation.
class Grid2D {
public:
    explicit Grid2D(int n);

    int n() const noexcept { return n_; }
    double h() const noexcept { return 1.0 / static_cast<double>(n_); }
    std::size_t interior_count() const noexcept { return interior_count_; }
    std::size_t node_count() const noexcept { return node_count_; }
    std::size_t cell_count() const noexcept { return cells_.size(); }
    std::size_t size(Layout layout) const noexcept {
        return layout == Layout::Interior ? interior_count_ : node_count_;
    }

    std::span<const Cell> cells() const noexcept { return cells_; }
    std::array<double, 2> node_coords(std::size_t node) const;

    /// Interior index of an all-node index, or -1 on the boundary.
    std::int64_t interior_index(std::size_t node) const { return to_interior_[node]; }
    std::size_t node_of_interior(std::size_t k) const { return to_node_[k]; }

    /// Lumped (row-sum) mass on all nodes; sums to |D| = 1.
    std::span<const double> lumped_mass_all() const noexcept { return mass_all_; }
    /// Lumped mass restricted to interior nodes; every entry equals h^2.
    std::span<const double> lumped_mass_interior() const noexcept { return mass_interior_; }

    // Stiffness sparsity (interior nodes, CSR, both triangles stored).
    std::span<const std::size_t> row_ptr() const noexcept { return row_ptr_; }
    std::span<const std::size_t> col_idx() const noexcept { return col_idx_; }
    std::span<const std::size_t> diag_slot() const noexcept { return diag_slot_; }
    /// For cell c and local pair (a, b), the CSR slot, or npos if either node is
    /// on the boundary. Stored as 9 entries per cell, row-major in (a, b).
    std::size_t scatter_slot(std::size_t cell, int a, int b) const {
        return scatter_[cell * 9 + static_cast<std::size_t>(a * 3 + b)];
    }
    /// Gradients of the three local P1 basis functions on a cell.
    const std::array<std::array<double, 2>, 3>& basis_gradients(std::size_t cell) const {
        return gradients_[cell % 2];
    }
    double cell_area() const noexcept { return 0.5 * h() * h(); }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    int n_;
    std::size_t interior_count_;
    std::size_t node_count_;
    std::vector<Cell> cells_;
    std::vector<std::int64_t> to_interior_;
    std::vector<std::size_t> to_node_;
    std::vector<double> mass_all_;
    std::vector<double> mass_interior_;
    std::vector<std::size_t> row_ptr_;
    std::vector<std::size_t> col_idx_;
    std::vector<std::size_t> diag_slot_;
    std::vector<std::size_t> scatter_;
    std::array<std::array<std::array<double, 2>, 3>, 2> gradients_{};
};

using GridPtr = std::shared_ptr<const Grid2D>;

GridPtr make_grid(int n);

/// Nodal scalar field on a grid.
class GridFunction {
public:
    GridFunction() = default;
    GridFunction(GridPtr grid, Layout layout);
    GridFunction(GridPtr grid, Layout layout, std::vector<double> values);

    const GridPtr& grid() const noexcept { return grid_; }
    Layout layout() const noexcept { return layout_; }
    std::size_t size() const noexcept { return values_.size(); }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    bool all_finite() const;

    /// Copy onto the all-node layout (boundary values zero for interior fields).
    GridFunction to_all_nodes() const;
    /// Restriction to interior nodes.
    GridFunction to_interior() const;

    GridFunction& operator+=(const GridFunction& other);
    GridFunction& operator-=(const GridFunction& other);
    GridFunction& operator*=(double s);

private:
    GridPtr grid_;
    Layout layout_ = Layout::Interior;
    std::vector<double> values_;
};

GridFunction operator+(GridFunction a, const GridFunction& b);
GridFunction operator-(GridFunction a, const GridFunction& b);
GridFunction operator*(double s, GridFunction a);

/// Piecewise-constant field, one value per cell.
class CellField {
public:
    CellField() = default;
    CellField(GridPtr grid, std::vector<double> values);

    const GridPtr& grid() const noexcept { return grid_; }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t c) const { return values_[c]; }
    double min() const;
    double max() const;

private:
    GridPtr grid_;
    std::vector<double> values_;
};

/// Symmetric sparse matrix in compressed-row layout. Shares its pattern with
/// the grid that produced it.
class SparseOperator {
public:
    SparseOperator() = default;
    SparseOperator(std::size_t dim, std::vector<std::size_t> row_ptr, std::vector<std::size_t> col,
                   std::vector<double> values);

    std::size_t dim() const noexcept { return dim_; }
    std::span<const std::size_t> row_ptr() const noexcept { return row_ptr_; }
    std::span<const std::size_t> col_idx() const noexcept { return col_; }
    std::span<const double> values() const noexcept { return values_; }

    double at(std::size_t i, std::size_t j) const;
    std::vector<double> diagonal() const;
    /// Largest |i - j| over stored entries.
    std::size_t bandwidth() const;
    bool is_symmetric() const;

    void multiply(std::span<const double> x, std::span<double> y) const;
    std::vector<double> operator*(std::span<const double> x) const;
    /// Quadratic form x^T A x.
    double energy(std::span<const double> x) const;

    /// Returns A + diag(d).
    SparseOperator plus_diagonal(std::span<const double> d) const;
    SparseOperator scaled(double s) const;

private:
    std::size_t dim_ = 0;
    std::vector<std::size_t> row_ptr_;
    std::vector<std::size_t> col_;
    std::vector<double> values_;
};

/// Interior stiffness matrix of P1 elements with cellwise diffusion kappa.
/// Throws CoefficientBoundError if any cell value is not positive.
SparseOperator assemble_stiffness(const Grid2D& grid, const CellField& kappa);
/// Stiffness with kappa = 1.
SparseOperator assemble_unit_stiffness(const Grid2D& grid);
/// Diagonal lumped mass on interior nodes.
SparseOperator assemble_lumped_mass(const Grid2D& grid);

enum class LinearSolver { BandedCholesky, ConjugateGradient };

struct SolveOptions {
    LinearSolver method = LinearSolver::BandedCholesky;
    double tol = 1e-10;           // relative residual target for CG
    std::size_t max_iterations = 0;  // 0: 10 * dim
};

struct SolveReport {
    std::vector<double> x;
    std::size_t iterations = 0;
    double relative_residual = 0.0;
};

/// Cholesky factor of a banded SPD matrix, lower band stored row by row.
class BandedCholesky {
public:
    explicit BandedCholesky(const SparseOperator& a);
    std::size_t dim() const noexcept { return dim_; }
    void solve_in_place(std::span<double> rhs) const;
    std::vector<double> solve(std::span<const double> rhs) const;

private:
    std::size_t dim_;
    std::size_t band_;
    std::vector<double> lower_;  // dim_ x (band_ + 1), entry (i, j) at i*(band_+1) + (j - i + band_)
};

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
/// Throws NonConvergenceError when the iteration cap is hit.
SolveReport conjugate_gradient(const SparseOperator& a, std::span<const double> rhs, double tol,
                               std::size_t max_iterations);

SolveReport solve_spd(const SparseOperator& a, std::span<const double> rhs,
                      const SolveOptions& options = {});

struct Norms {
    double l2 = 0.0;
    double h01 = 0.0;
};

/// Lumped-mass L2 norm and H^1_0 seminorm ||grad f||.
Norms norms(const GridFunction& f);
double l2_norm(const GridFunction& f);
double l2_inner(const GridFunction& a, const GridFunction& b);
/// ||grad f||_{L2}, computed elementwise; for interior fields the boundary is zero.
double h01_seminorm(const GridFunction& f);
/// Lumped L4 norm (sum_i m_i f_i^4)^{1/4}.
double l4_norm(const GridFunction& f);

/// Smallest eigenvalue of the pencil (a, b) by shift-invert Lanczos, b diagonal
/// SPD given as its diagonal. Throws NumericalError on stagnation.
struct EigenPair {
    double value = 0.0;
    std::vector<double> vector;
    std::size_t iterations = 0;
};
EigenPair smallest_generalized_eigenpair(const SparseOperator& a, std::span<const double> b_diag,
                                         double rel_tol = 1e-8, std::size_t max_iterations = 1000);
/// Same against a sparse SPD b (used for Rayleigh quotients against A_1).
EigenPair smallest_generalized_eigenpair(const SparseOperator& a, const SparseOperator& b,
                                         double rel_tol = 1e-8, std::size_t max_iterations = 1000);

struct GridConstants {
    double friedrichs = 0.0;  // C_D = 1/sqrt(lambda_min(A_1, M))
    double h01_l4 = 0.0;      // estimate of sup ||v||_{L4} / ||grad v||
    double lambda_min = 0.0;
};

/// Discrete Friedrichs constant and H^1_0 -> L^4 embedding estimate.
GridConstants estimate_constants(const Grid2D& grid, std::uint64_t seed = 20220611,
                                 int restarts = 20);

}  // namespace saapde
