#include <random>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "saapde/experiments.hpp"

using namespace saapde;

namespace {

const Model& model() {
    static const Model m{ModelSettings{}};
    return m;
}

void BM_AssembleStiffness(benchmark::State& state) {
    const auto g = make_grid(static_cast<int>(state.range(0)));
    const CellField kappa(g, std::vector<double>(g->cell_count(), 1.0));
    for (auto _ : state) benchmark::DoNotOptimize(assemble_stiffness(*g, kappa));
}
BENCHMARK(BM_AssembleStiffness)->Arg(16)->Arg(32)->Arg(64);

void BM_CholeskySolve(benchmark::State& state) {
    const auto g = make_grid(static_cast<int>(state.range(0)));
    const BandedCholesky chol(assemble_unit_stiffness(*g));
    std::vector<double> rhs(g->interior_count(), 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(chol.solve(rhs));
}
BENCHMARK(BM_CholeskySolve)->Arg(16)->Arg(32)->Arg(64);

void BM_SemilinearGradient(benchmark::State& state) {
    const Model& m = model();
    const GridFunction u = m.default_start(ProblemKind::SemilinearAvar);
    const ParamVector xi = draw_parameter(1, 0, m.settings().fields.m_xi);
    for (auto _ : state) benchmark::DoNotOptimize(m.semilinear()->grad_Jhat(u, xi));
}
BENCHMARK(BM_SemilinearGradient);

void BM_BilinearGradient(benchmark::State& state) {
    const Model& m = model();
    const GridFunction u = m.default_start(ProblemKind::Bilinear);
    const ParamVector xi = draw_parameter(1, 0, m.settings().fields.m_xi);
    for (auto _ : state) benchmark::DoNotOptimize(m.bilinear()->grad_p(u, xi));
}
BENCHMARK(BM_BilinearGradient);

void BM_AvarEmpirical(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal;
    std::vector<double> z(n), w(n, 1.0 / static_cast<double>(n));
    for (auto& x : z) x = normal(rng);
    for (auto _ : state) benchmark::DoNotOptimize(avar_empirical(z, w, 0.5));
}
BENCHMARK(BM_AvarEmpirical)->Arg(64)->Arg(1024)->Arg(4096);

void BM_SaaEvaluation(benchmark::State& state) {
    const Model& m = model();
    const auto kind = state.range(0) == 0 ? ProblemKind::SemilinearAvar : ProblemKind::Bilinear;
    const auto f = m.objective(kind, monte_carlo(m.settings().fields, 1, 64));
    const GridFunction u = m.default_start(kind);
    for (auto _ : state) benchmark::DoNotOptimize(f->evaluate_with_gradient(u));
    state.SetLabel(std::string(to_string(kind)));
}
BENCHMARK(BM_SaaEvaluation)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_CoercivityMargin(benchmark::State& state) {
    const Model& m = model();
    const GridFunction u = m.default_start(ProblemKind::Bilinear);
    const ParamVector xi = draw_parameter(2, 0, m.settings().fields.m_xi);
    for (auto _ : state) benchmark::DoNotOptimize(m.bilinear()->coercivity_margin(u, xi));
}
BENCHMARK(BM_CoercivityMargin)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
