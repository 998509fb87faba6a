#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "saapde/grid.hpp"

namespace saapde::test {

inline Eigen::MatrixXd dense(const SparseOperator& a) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(a.dim()), static_cast<Eigen::Index>(a.dim()));
    const auto rp = a.row_ptr();
    const auto ci = a.col_idx();
    const auto v = a.values();
    for (std::size_t i = 0; i < a.dim(); ++i)
        for (std::size_t k = rp[i]; k < rp[i + 1]; ++k)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(ci[k])) += v[k];
    return m;
}

inline Eigen::VectorXd vec(std::span<const double> x) {
    return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

inline GridFunction random_function(const GridPtr& grid, Layout layout, std::uint64_t seed, double lo = -1.0,
                                    double hi = 1.0) {
    return GridFunction(grid, layout, random_vector(grid->size(layout), seed, lo, hi));
}

/// Relative error |a - b| / max(|a|, |b|), zero when both vanish.
inline double rel_error(double a, double b) {
    const double s = std::max(std::abs(a), std::abs(b));
    return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}

}  // namespace saapde::test
