// Microbenchmarks for the per-replication hot path: factorisation, penalty
// search, and the quadratic forms behind each statistic.

#include <benchmark/benchmark.h>

#include <random>

#include "rjar/artests.hpp"
#include "rjar/montecarlo.hpp"

namespace {

Eigen::MatrixXd standardised_draw(int n, int k, unsigned seed) {
    std::mt19937 gen(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    Eigen::MatrixXd Z(n, k);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) Z(i, j) = dist(gen);
    }
    for (int j = 0; j < k; ++j) {
        Z.col(j) /= std::sqrt(Z.col(j).squaredNorm() / n);
    }
    return Z;
}

Eigen::VectorXd residual_draw(int n, unsigned seed) {
    std::mt19937 gen(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    Eigen::VectorXd e(n);
    for (int i = 0; i < n; ++i) e(i) = dist(gen);
    return e;
}

void BM_BuildKernel(benchmark::State& state) {
    const auto Z = standardised_draw(100, static_cast<int>(state.range(0)), 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(rjar::build_kernel(Z));
    }
}
BENCHMARK(BM_BuildKernel)->Arg(30)->Arg(90)->Arg(190);

void BM_SelectGamma(benchmark::State& state) {
    const auto Z = standardised_draw(100, static_cast<int>(state.range(0)), 2);
    const auto kern = rjar::build_kernel(Z);
    for (auto _ : state) {
        benchmark::DoNotOptimize(rjar::select_gamma(kern));
    }
}
BENCHMARK(BM_SelectGamma)->Arg(90)->Arg(190);

void BM_OffdiagSqSum(benchmark::State& state) {
    const auto Z = standardised_draw(100, 190, 3);
    const auto kern = rjar::build_kernel(Z);
    double gamma = 0.0;
    for (auto _ : state) {
        gamma += 1.0;
        benchmark::DoNotOptimize(rjar::offdiag_sq_sum(kern, gamma));
    }
}
BENCHMARK(BM_OffdiagSqSum);

void BM_RjarStatistic(benchmark::State& state) {
    const auto Z = standardised_draw(100, static_cast<int>(state.range(0)), 4);
    const auto kern = rjar::build_kernel(Z);
    const auto sel = rjar::select_gamma(kern);
    const rjar::RjarContext ctx(kern, sel);
    const auto e = residual_draw(100, 5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(ctx.statistic(e));
    }
}
BENCHMARK(BM_RjarStatistic)->Arg(90)->Arg(190);

void BM_CmsContextBuild(benchmark::State& state) {
    const auto Z = standardised_draw(100, 90, 6);
    const auto P = rjar::materialize(rjar::build_kernel(Z), 0.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(rjar::CmsContext(P));
    }
}
BENCHMARK(BM_CmsContextBuild);

void BM_SupScore(benchmark::State& state) {
    const auto Z = standardised_draw(100, 190, 7);
    const auto e = residual_draw(100, 8);
    for (auto _ : state) {
        benchmark::DoNotOptimize(rjar::sup_score_statistic(Z, e));
    }
}
BENCHMARK(BM_SupScore);

void BM_DrawReplication(benchmark::State& state) {
    rjar::SimConfig cfg;
    cfg.k = static_cast<int>(state.range(0));
    cfg.mu2 = 30.0;
    std::uint64_t rep = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(rjar::draw_replication(cfg, rep++));
    }
}
BENCHMARK(BM_DrawReplication)->Arg(30)->Arg(190);

} // namespace

BENCHMARK_MAIN();
