#include "saapde/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include <fmt/format.h>

#include "saapde/errors.hpp"

namespace saapde {

namespace {

std::array<std::array<double, 2>, 3> triangle_gradients(const std::array<std::array<double, 2>, 3>& p) {
    const double area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) -
                         (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    return {{{(p[1][1] - p[2][1]) / area2, (p[2][0] - p[1][0]) / area2},
             {(p[2][1] - p[0][1]) / area2, (p[0][0] - p[2][0]) / area2},
             {(p[0][1] - p[1][1]) / area2, (p[1][0] - p[0][0]) / area2}}};
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// Uniform double in [0, 1) from the top 53 bits.
double unit_double(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

}  // namespace

// ---------------------------------------------------------------------------
// Grid2D

Grid2D::Grid2D(int n) : n_(n) {
    if (n < 2) throw ValidationError(fmt::format("grid needs n >= 2 cells per side, got {}", n));
    const auto np = static_cast<std::size_t>(n + 1);
    const auto ni = static_cast<std::size_t>(n - 1);
    node_count_ = np * np;
    interior_count_ = ni * ni;

    to_interior_.assign(node_count_, -1);
    to_node_.reserve(interior_count_);
    for (std::size_t j = 1; j + 1 < np; ++j) {
        for (std::size_t i = 1; i + 1 < np; ++i) {
            to_interior_[j * np + i] = static_cast<std::int64_t>(to_node_.size());
            to_node_.push_back(j * np + i);
        }
    }

    const double hh = h();
    cells_.reserve(2 * static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    for (std::size_t j = 0; j < static_cast<std::size_t>(n); ++j) {
        for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
            const std::size_t p00 = j * np + i;
            const std::size_t p10 = p00 + 1;
            const std::size_t p01 = p00 + np;
            const std::size_t p11 = p01 + 1;
            const double x = static_cast<double>(i) * hh;
            const double y = static_cast<double>(j) * hh;
            cells_.push_back({{p00, p10, p11}, {x + 2.0 * hh / 3.0, y + hh / 3.0}});
            cells_.push_back({{p00, p11, p01}, {x + hh / 3.0, y + 2.0 * hh / 3.0}});
        }
    }
    for (std::size_t orient = 0; orient < 2; ++orient) {
        const Cell& c = cells_[orient];
        gradients_[orient] = triangle_gradients(
            {node_coords(c.nodes[0]), node_coords(c.nodes[1]), node_coords(c.nodes[2])});
    }

    mass_all_.assign(node_count_, 0.0);
    const double third = cell_area() / 3.0;
    for (const Cell& c : cells_)
        for (std::size_t v : c.nodes) mass_all_[v] += third;
    mass_interior_.resize(interior_count_);
    for (std::size_t k = 0; k < interior_count_; ++k) mass_interior_[k] = mass_all_[to_node_[k]];

    // Interior stiffness pattern.
    std::vector<std::vector<std::size_t>> adjacency(interior_count_);
    for (const Cell& c : cells_) {
        for (std::size_t a = 0; a < 3; ++a) {
            const auto ia = to_interior_[c.nodes[a]];
            if (ia < 0) continue;
            for (std::size_t b = 0; b < 3; ++b) {
                const auto ib = to_interior_[c.nodes[b]];
                if (ib >= 0) adjacency[static_cast<std::size_t>(ia)].push_back(static_cast<std::size_t>(ib));
            }
        }
    }
    row_ptr_.assign(interior_count_ + 1, 0);
    for (std::size_t r = 0; r < interior_count_; ++r) {
        auto& row = adjacency[r];
        std::sort(row.begin(), row.end());
        row.erase(std::unique(row.begin(), row.end()), row.end());
        row_ptr_[r + 1] = row_ptr_[r] + row.size();
    }
    col_idx_.reserve(row_ptr_.back());
    diag_slot_.resize(interior_count_);
    for (std::size_t r = 0; r < interior_count_; ++r) {
        for (std::size_t col : adjacency[r]) {
            if (col == r) diag_slot_[r] = col_idx_.size();
            col_idx_.push_back(col);
        }
    }
    scatter_.assign(cells_.size() * 9, npos);
    for (std::size_t ci = 0; ci < cells_.size(); ++ci) {
        const Cell& c = cells_[ci];
        for (int a = 0; a < 3; ++a) {
            const auto ia = to_interior_[c.nodes[static_cast<std::size_t>(a)]];
            if (ia < 0) continue;
            const auto row = static_cast<std::size_t>(ia);
            for (int b = 0; b < 3; ++b) {
                const auto ib = to_interior_[c.nodes[static_cast<std::size_t>(b)]];
                if (ib < 0) continue;
                const auto first = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[row]);
                const auto last = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[row + 1]);
                const auto it = std::lower_bound(first, last, static_cast<std::size_t>(ib));
                scatter_[ci * 9 + static_cast<std::size_t>(a * 3 + b)] =
                    static_cast<std::size_t>(it - col_idx_.begin());
            }
        }
    }
}

std::array<double, 2> Grid2D::node_coords(std::size_t node) const {
    const auto np = static_cast<std::size_t>(n_ + 1);
    return {static_cast<double>(node % np) * h(), static_cast<double>(node / np) * h()};
}

GridPtr make_grid(int n) { return std::make_shared<const Grid2D>(n); }

// ---------------------------------------------------------------------------
// GridFunction / CellField

GridFunction::GridFunction(GridPtr grid, Layout layout)
    : grid_(std::move(grid)), layout_(layout), values_(grid_->size(layout), 0.0) {}

GridFunction::GridFunction(GridPtr grid, Layout layout, std::vector<double> values)
    : grid_(std::move(grid)), layout_(layout), values_(std::move(values)) {
    if (values_.size() != grid_->size(layout_))
        throw ValidationError(fmt::format("grid function has {} values, layout expects {}",
                                          values_.size(), grid_->size(layout_)));
}

bool GridFunction::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

GridFunction GridFunction::to_all_nodes() const {
    if (layout_ == Layout::AllNodes) return *this;
    GridFunction out(grid_, Layout::AllNodes);
    for (std::size_t k = 0; k < values_.size(); ++k) out[grid_->node_of_interior(k)] = values_[k];
    return out;
}

GridFunction GridFunction::to_interior() const {
    if (layout_ == Layout::Interior) return *this;
    GridFunction out(grid_, Layout::Interior);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = values_[grid_->node_of_interior(k)];
    return out;
}

namespace {
void check_compatible(const GridFunction& a, const GridFunction& b) {
    if (a.grid() != b.grid() || a.layout() != b.layout())
        throw ValidationError("grid functions live on different grids or layouts");
}
}  // namespace

GridFunction& GridFunction::operator+=(const GridFunction& other) {
    check_compatible(*this, other);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
}

GridFunction& GridFunction::operator-=(const GridFunction& other) {
    check_compatible(*this, other);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
    return *this;
}

GridFunction& GridFunction::operator*=(double s) {
    for (double& v : values_) v *= s;
    return *this;
}

GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
GridFunction operator*(double s, GridFunction a) { return a *= s; }

CellField::CellField(GridPtr grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
    if (values_.size() != grid_->cell_count())
        throw ValidationError(fmt::format("cell field has {} values for {} cells", values_.size(),
                                          grid_->cell_count()));
    for (double v : values_)
        if (!std::isfinite(v)) throw ValidationError("cell field contains a non-finite value");
}

double CellField::min() const { return *std::min_element(values_.begin(), values_.end()); }
double CellField::max() const { return *std::max_element(values_.begin(), values_.end()); }

// ---------------------------------------------------------------------------
// SparseOperator

SparseOperator::SparseOperator(std::size_t dim, std::vector<std::size_t> row_ptr,
                               std::vector<std::size_t> col, std::vector<double> values)
    : dim_(dim), row_ptr_(std::move(row_ptr)), col_(std::move(col)), values_(std::move(values)) {
    if (row_ptr_.size() != dim_ + 1 || col_.size() != values_.size() || row_ptr_.back() != col_.size())
        throw ValidationError("inconsistent compressed-row arrays");
}

double SparseOperator::at(std::size_t i, std::size_t j) const {
    const auto first = col_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i]);
    const auto last = col_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i + 1]);
    const auto it = std::lower_bound(first, last, j);
    if (it == last || *it != j) return 0.0;
    return values_[static_cast<std::size_t>(it - col_.begin())];
}

std::vector<double> SparseOperator::diagonal() const {
    std::vector<double> d(dim_);
    for (std::size_t i = 0; i < dim_; ++i) d[i] = at(i, i);
    return d;
}

std::size_t SparseOperator::bandwidth() const {
    std::size_t bw = 0;
    for (std::size_t i = 0; i < dim_; ++i)
        for (std::size_t s = row_ptr_[i]; s < row_ptr_[i + 1]; ++s)
            bw = std::max(bw, col_[s] > i ? col_[s] - i : i - col_[s]);
    return bw;
}

bool SparseOperator::is_symmetric() const {
    for (std::size_t i = 0; i < dim_; ++i)
        for (std::size_t s = row_ptr_[i]; s < row_ptr_[i + 1]; ++s)
            if (at(col_[s], i) != values_[s]) return false;
    return true;
}

void SparseOperator::multiply(std::span<const double> x, std::span<double> y) const {
    for (std::size_t i = 0; i < dim_; ++i) {
        double s = 0.0;
        for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) s += values_[k] * x[col_[k]];
        y[i] = s;
    }
}

std::vector<double> SparseOperator::operator*(std::span<const double> x) const {
    std::vector<double> y(dim_);
    multiply(x, y);
    return y;
}

double SparseOperator::energy(std::span<const double> x) const {
    std::vector<double> ax(dim_);
    multiply(x, ax);
    return dot(x, ax);
}

SparseOperator SparseOperator::plus_diagonal(std::span<const double> d) const {
    SparseOperator out = *this;
    for (std::size_t i = 0; i < dim_; ++i) {
        const auto first = col_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i]);
        const auto last = col_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i + 1]);
        const auto it = std::lower_bound(first, last, i);
        if (it == last || *it != i) throw ValidationError("operator pattern lacks a diagonal entry");
        out.values_[static_cast<std::size_t>(it - col_.begin())] += d[i];
    }
    return out;
}

SparseOperator SparseOperator::scaled(double s) const {
    SparseOperator out = *this;
    for (double& v : out.values_) v *= s;
    return out;
}

// ---------------------------------------------------------------------------
// Assembly

SparseOperator assemble_stiffness(const Grid2D& grid, const CellField& kappa) {
    const auto kv = kappa.values();
    if (kv.size() != grid.cell_count()) throw ValidationError("diffusion field does not match grid");
    std::vector<double> values(grid.col_idx().size(), 0.0);
    const double area = grid.cell_area();
    for (std::size_t c = 0; c < grid.cell_count(); ++c) {
        if (!(kv[c] > 0.0))
            throw CoefficientBoundError(fmt::format("diffusion coefficient {} on cell {} is not positive", kv[c], c));
        const auto& g = grid.basis_gradients(c);
        const double w = area * kv[c];
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) {
                const std::size_t slot = grid.scatter_slot(c, a, b);
                if (slot == Grid2D::npos) continue;
                const auto& ga = g[static_cast<std::size_t>(a)];
                const auto& gb = g[static_cast<std::size_t>(b)];
                values[slot] += w * (ga[0] * gb[0] + ga[1] * gb[1]);
            }
        }
    }
    return SparseOperator(grid.interior_count(), {grid.row_ptr().begin(), grid.row_ptr().end()},
                          {grid.col_idx().begin(), grid.col_idx().end()}, std::move(values));
}

SparseOperator assemble_unit_stiffness(const Grid2D& grid) {
    // Shares the pattern; a temporary grid pointer is not needed for the field.
    std::vector<double> values(grid.col_idx().size(), 0.0);
    const double area = grid.cell_area();
    for (std::size_t c = 0; c < grid.cell_count(); ++c) {
        const auto& g = grid.basis_gradients(c);
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) {
                const std::size_t slot = grid.scatter_slot(c, a, b);
                if (slot == Grid2D::npos) continue;
                const auto& ga = g[static_cast<std::size_t>(a)];
                const auto& gb = g[static_cast<std::size_t>(b)];
                values[slot] += area * (ga[0] * gb[0] + ga[1] * gb[1]);
            }
        }
    }
    return SparseOperator(grid.interior_count(), {grid.row_ptr().begin(), grid.row_ptr().end()},
                          {grid.col_idx().begin(), grid.col_idx().end()}, std::move(values));
}

SparseOperator assemble_lumped_mass(const Grid2D& grid) {
    const std::size_t m = grid.interior_count();
    std::vector<std::size_t> row_ptr(m + 1);
    std::vector<std::size_t> col(m);
    std::iota(row_ptr.begin(), row_ptr.end(), std::size_t{0});
    std::iota(col.begin(), col.end(), std::size_t{0});
    const auto d = grid.lumped_mass_interior();
    return SparseOperator(m, std::move(row_ptr), std::move(col), {d.begin(), d.end()});
}

// ---------------------------------------------------------------------------
// Linear solvers

BandedCholesky::BandedCholesky(const SparseOperator& a) : dim_(a.dim()), band_(a.bandwidth()) {
    const std::size_t w = band_ + 1;
    lower_.assign(dim_ * w, 0.0);
    const auto rp = a.row_ptr();
    const auto ci = a.col_idx();
    const auto av = a.values();
    for (std::size_t i = 0; i < dim_; ++i)
        for (std::size_t s = rp[i]; s < rp[i + 1]; ++s)
            if (ci[s] <= i) lower_[i * w + (ci[s] + band_ - i)] = av[s];

    for (std::size_t i = 0; i < dim_; ++i) {
        const std::size_t j0 = i > band_ ? i - band_ : 0;
        double* li = &lower_[i * w];
        for (std::size_t j = j0; j <= i; ++j) {
            const double* lj = &lower_[j * w];
            const std::size_t k0 = std::max(j0, j > band_ ? j - band_ : std::size_t{0});
            double s = li[j + band_ - i];
            for (std::size_t k = k0; k < j; ++k) s -= li[k + band_ - i] * lj[k + band_ - j];
            if (j == i) {
                if (!(s > 0.0))
                    throw NumericalError(fmt::format("matrix is not positive definite (pivot {} at row {})", s, i));
                li[band_] = std::sqrt(s);
            } else {
                li[j + band_ - i] = s / lj[band_];
            }
        }
    }
}

void BandedCholesky::solve_in_place(std::span<double> x) const {
    const std::size_t w = band_ + 1;
    for (std::size_t i = 0; i < dim_; ++i) {
        const double* li = &lower_[i * w];
        double s = x[i];
        for (std::size_t k = i > band_ ? i - band_ : 0; k < i; ++k) s -= li[k + band_ - i] * x[k];
        x[i] = s / li[band_];
    }
    for (std::size_t ii = dim_; ii-- > 0;) {
        x[ii] /= lower_[ii * w + band_];
        const double xi = x[ii];
        const double* li = &lower_[ii * w];
        for (std::size_t k = ii > band_ ? ii - band_ : 0; k < ii; ++k) x[k] -= li[k + band_ - ii] * xi;
    }
}

std::vector<double> BandedCholesky::solve(std::span<const double> rhs) const {
    std::vector<double> x(rhs.begin(), rhs.end());
    solve_in_place(x);
    return x;
}

SolveReport conjugate_gradient(const SparseOperator& a, std::span<const double> rhs, double tol,
                               std::size_t max_iterations) {
    if (!(tol > 0.0)) throw ValidationError("solver tolerance must be positive");
    const std::size_t m = a.dim();
    if (max_iterations == 0) max_iterations = 10 * m;
    SolveReport out;
    out.x.assign(m, 0.0);
    const double rhs_norm = norm2(rhs);
    if (rhs_norm == 0.0) return out;

    const std::vector<double> diag = a.diagonal();
    std::vector<double> r(rhs.begin(), rhs.end());
    std::vector<double> z(m), p(m), ap(m);
    for (std::size_t i = 0; i < m; ++i) z[i] = r[i] / diag[i];
    p = z;
    double rz = dot(r, z);
    double rel = 1.0;
    for (std::size_t it = 1; it <= max_iterations; ++it) {
        a.multiply(p, ap);
        const double alpha = rz / dot(p, ap);
        for (std::size_t i = 0; i < m; ++i) {
            out.x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = norm2(r) / rhs_norm;
        if (rel <= tol) {
            out.iterations = it;
            out.relative_residual = rel;
            return out;
        }
        for (std::size_t i = 0; i < m; ++i) z[i] = r[i] / diag[i];
        const double rz_new = dot(r, z);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < m; ++i) p[i] = z[i] + beta * p[i];
    }
    throw NonConvergenceError(
        fmt::format("conjugate gradients stopped after {} iterations at relative residual {:.3e}",
                    max_iterations, rel),
        rel);
}

SolveReport solve_spd(const SparseOperator& a, std::span<const double> rhs, const SolveOptions& options) {
    if (rhs.size() != a.dim()) throw ValidationError("right-hand side does not match operator");
    if (options.method == LinearSolver::ConjugateGradient)
        return conjugate_gradient(a, rhs, options.tol, options.max_iterations);
    SolveReport out;
    out.x = BandedCholesky(a).solve(rhs);
    const double rhs_norm = norm2(rhs);
    if (rhs_norm > 0.0) {
        std::vector<double> res = a * out.x;
        for (std::size_t i = 0; i < res.size(); ++i) res[i] -= rhs[i];
        out.relative_residual = norm2(res) / rhs_norm;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Norms

double l2_inner(const GridFunction& a, const GridFunction& b) {
    check_compatible(a, b);
    const auto& grid = *a.grid();
    const auto m = a.layout() == Layout::Interior ? grid.lumped_mass_interior() : grid.lumped_mass_all();
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += m[i] * a[i] * b[i];
    return s;
}

double l2_norm(const GridFunction& f) { return std::sqrt(l2_inner(f, f)); }

double h01_seminorm(const GridFunction& f) {
    const auto& grid = *f.grid();
    const bool interior = f.layout() == Layout::Interior;
    const double area = grid.cell_area();
    double s = 0.0;
    for (std::size_t c = 0; c < grid.cell_count(); ++c) {
        const Cell& cell = grid.cells()[c];
        const auto& g = grid.basis_gradients(c);
        double gx = 0.0;
        double gy = 0.0;
        for (std::size_t a = 0; a < 3; ++a) {
            double v;
            if (interior) {
                const auto k = grid.interior_index(cell.nodes[a]);
                v = k < 0 ? 0.0 : f[static_cast<std::size_t>(k)];
            } else {
                v = f[cell.nodes[a]];
            }
            gx += v * g[a][0];
            gy += v * g[a][1];
        }
        s += area * (gx * gx + gy * gy);
    }
    return std::sqrt(s);
}

Norms norms(const GridFunction& f) { return {l2_norm(f), h01_seminorm(f)}; }

double l4_norm(const GridFunction& f) {
    const auto& grid = *f.grid();
    const auto m = f.layout() == Layout::Interior ? grid.lumped_mass_interior() : grid.lumped_mass_all();
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += m[i] * f[i] * f[i] * f[i] * f[i];
    return std::sqrt(std::sqrt(s));
}

// ---------------------------------------------------------------------------
// Eigenvalues and constants

namespace {

/// Number of eigenvalues of the symmetric tridiagonal (alpha, beta) below x.
std::size_t sturm_count(const std::vector<double>& alpha, const std::vector<double>& beta, double x) {
    std::size_t count = 0;
    double d = 1.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        const double b2 = i == 0 ? 0.0 : beta[i - 1] * beta[i - 1];
        d = alpha[i] - x - (i == 0 ? 0.0 : b2 / d);
        if (d == 0.0) d = -1e-300;
        if (d < 0.0) ++count;
    }
    return count;
}

double largest_tridiagonal_eigenvalue(const std::vector<double>& alpha, const std::vector<double>& beta) {
    double lo = alpha[0], hi = alpha[0];
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        const double r = (i > 0 ? std::abs(beta[i - 1]) : 0.0) + (i + 1 < alpha.size() ? std::abs(beta[i]) : 0.0);
        lo = std::min(lo, alpha[i] - r);
        hi = std::max(hi, alpha[i] + r);
    }
    const std::size_t k = alpha.size();
    for (int it = 0; it < 200 && hi - lo > 4e-16 * std::max(std::abs(lo), std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (sturm_count(alpha, beta, mid) < k) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

/// Eigenvector of the tridiagonal for the eigenvalue theta, unit Euclidean
/// norm, by two steps of inverse iteration.
std::vector<double> tridiagonal_eigenvector(const std::vector<double>& alpha, const std::vector<double>& beta,
                                            double theta) {
    const std::size_t k = alpha.size();
    const double tiny = 1e-14 * std::max(1.0, std::abs(theta));
    std::vector<double> y(k, 1.0), diag(k), upper(k), rhs(k);
    for (int pass = 0; pass < 2; ++pass) {
        // Thomas elimination on (T - theta I) z = y.
        rhs = y;
        for (std::size_t i = 0; i < k; ++i) {
            diag[i] = alpha[i] - theta;
            upper[i] = i + 1 < k ? beta[i] : 0.0;
            if (i > 0) {
                const double l = beta[i - 1] / diag[i - 1];
                diag[i] -= l * upper[i - 1];
                rhs[i] -= l * rhs[i - 1];
            }
            if (std::abs(diag[i]) < tiny) diag[i] = diag[i] < 0.0 ? -tiny : tiny;
        }
        for (std::size_t i = k; i-- > 0;) {
            const double next = i + 1 < k ? y[i + 1] : 0.0;
            y[i] = (rhs[i] - upper[i] * next) / diag[i];
        }
        const double norm = norm2(y);
        for (double& v : y) v /= norm;
    }
    return y;
}

/// Smallest eigenvalue of a x = lambda b x through Lanczos on the shift-invert
/// operator a^{-1} b, which is self-adjoint in the b inner product. Full
/// reorthogonalisation keeps clustered spectra (typical for coefficient
/// pencils) from stalling the iteration.
template <class ApplyB>
EigenPair lanczos_smallest(const SparseOperator& a, ApplyB&& apply_b, double rel_tol,
                            std::size_t max_iterations) {
    if (!(rel_tol > 0.0)) throw ValidationError("eigenvalue tolerance must be positive");
    const BandedCholesky chol(a);
    const std::size_t m = a.dim();
    const std::size_t steps = std::min(m, max_iterations);
    std::vector<std::vector<double>> q;   // b-orthonormal basis
    std::vector<std::vector<double>> bq;  // b applied to the basis
    std::vector<double> alpha, beta;
    std::vector<double> w(m, 1.0), bw(m);
    // A start vector with every mode present.
    for (std::size_t i = 0; i < m; ++i) w[i] = 1.0 + 0.5 * std::sin(0.7 * static_cast<double>(i) + 0.3);
    apply_b(w, bw);
    double norm = std::sqrt(dot(w, bw));

    EigenPair out;
    for (std::size_t j = 0; j < steps; ++j) {
        for (std::size_t i = 0; i < m; ++i) {
            w[i] /= norm;
            bw[i] /= norm;
        }
        q.push_back(w);
        bq.push_back(bw);
        // w = a^{-1} b q_j, orthogonalised twice against the basis.
        w = bq.back();
        chol.solve_in_place(w);
        alpha.push_back(dot(w, bq.back()));
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t i = 0; i < q.size(); ++i) {
                const double c = dot(w, bq[i]);
                for (std::size_t r = 0; r < m; ++r) w[r] -= c * q[i][r];
            }
        }
        apply_b(w, bw);
        norm = std::sqrt(std::max(dot(w, bw), 0.0));

        const double theta = largest_tridiagonal_eigenvalue(alpha, beta);
        const std::vector<double> y = tridiagonal_eigenvector(alpha, beta, theta);
        // |theta - mu| <= norm |y_last| for some eigenvalue mu of the operator;
        // the relative error of 1/theta is the same to first order.
        const double residual = norm * std::abs(y.back());
        const bool done = residual <= rel_tol * theta || norm <= 1e-14 * theta || j + 1 == steps;
        if (done) {
            if (residual > rel_tol * theta && norm > 1e-14 * theta)
                throw NumericalError(fmt::format("Lanczos eigenvalue estimate did not converge in {} steps", steps));
            out.value = 1.0 / theta;
            out.iterations = j + 1;
            out.vector.assign(m, 0.0);
            for (std::size_t i = 0; i < q.size(); ++i)
                for (std::size_t r = 0; r < m; ++r) out.vector[r] += y[i] * q[i][r];
            apply_b(out.vector, bw);
            const double bn = std::sqrt(dot(out.vector, bw));
            for (double& v : out.vector) v /= bn;
            return out;
        }
        beta.push_back(norm);
    }
    throw NumericalError("Lanczos eigenvalue estimate did not converge");
}

}  // namespace

EigenPair smallest_generalized_eigenpair(const SparseOperator& a, std::span<const double> b_diag,
                                         double rel_tol, std::size_t max_iterations) {
    return lanczos_smallest(
        a,
        [&](std::span<const double> x, std::span<double> y) {
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = b_diag[i] * x[i];
        },
        rel_tol, max_iterations);
}

EigenPair smallest_generalized_eigenpair(const SparseOperator& a, const SparseOperator& b,
                                         double rel_tol, std::size_t max_iterations) {
    return lanczos_smallest(
        a, [&](std::span<const double> x, std::span<double> y) { b.multiply(x, y); }, rel_tol,
        max_iterations);
}

GridConstants estimate_constants(const Grid2D& grid, std::uint64_t seed, int restarts) {
    GridConstants out;
    const SparseOperator a1 = assemble_unit_stiffness(grid);
    const auto mass = grid.lumped_mass_interior();
    const EigenPair ground = smallest_generalized_eigenpair(a1, mass, 1e-8);
    out.lambda_min = ground.value;
    out.friedrichs = 1.0 / std::sqrt(ground.value);

    // Maximise sum_i m_i v_i^4 on the energy sphere v^T A_1 v = 1. The map
    // v -> A_1^{-1}(m v^3), renormalised, is an ascent step for this convex
    // objective (it maximises the linearisation over the sphere).
    const BandedCholesky chol(a1);
    const std::size_t m = grid.interior_count();
    std::mt19937_64 rng(seed);
    double best = 0.0;
    for (int r = 0; r < std::max(restarts, 1); ++r) {
        std::vector<double> v(m);
        for (double& x : v) x = r == 0 ? 1.0 : 2.0 * unit_double(rng()) - 1.0;
        double q_prev = 0.0;
        double q = 0.0;
        for (int it = 0; it < 2000; ++it) {
            const double e = std::sqrt(a1.energy(v));
            for (double& x : v) x /= e;
            q = 0.0;
            for (std::size_t i = 0; i < m; ++i) q += mass[i] * v[i] * v[i] * v[i] * v[i];
            if (it > 0 && std::abs(q - q_prev) <= 1e-12 * q) break;
            q_prev = q;
            for (std::size_t i = 0; i < m; ++i) v[i] = mass[i] * v[i] * v[i] * v[i];
            chol.solve_in_place(v);
        }
        best = std::max(best, std::sqrt(std::sqrt(q)));
    }
    out.h01_l4 = best;
    return out;
}

}  // namespace saapde
