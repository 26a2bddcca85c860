#include <cmath>
#include <map>
#include <random>

#include <benchmark/benchmark.h>

#include "drshift/kernels.hpp"

using namespace drshift;

namespace {

struct Data {
    Points x;
    Vector w;
};

const Data& data(Eigen::Index n)
{
    static std::map<Eigen::Index, Data> cache;
    auto it = cache.find(n);
    if (it == cache.end()) {
        std::mt19937_64 rng(1);
        std::normal_distribution<double> nd;
        Data d{Points(n, 8), Vector(n)};
        for (Eigen::Index i = 0; i < n; ++i) {
            for (int k = 0; k < 8; ++k) {
                d.x(i, k) = nd(rng);
            }
            d.w[i] = std::abs(nd(rng));
        }
        it = cache.emplace(n, std::move(d)).first;
    }
    return it->second;
}

void bm_dot_serial(benchmark::State& state)
{
    const Data& d = data(state.range(0));
    const Vector y = d.x.col(0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(kernels::serial::dot(kernels::view(d.w), kernels::view(y)));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bm_dot_omp(benchmark::State& state)
{
    const Data& d = data(state.range(0));
    const Vector y = d.x.col(0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(kernels::omp::dot(kernels::view(d.w), kernels::view(y)));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bm_gram_serial(benchmark::State& state)
{
    const Data& d = data(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(kernels::serial::weighted_gram(d.x, kernels::view(d.w)));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bm_gram_omp(benchmark::State& state)
{
    const Data& d = data(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(kernels::omp::weighted_gram(d.x, kernels::view(d.w)));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bm_row_sum_serial(benchmark::State& state)
{
    const Data& d = data(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(kernels::serial::weighted_row_sum(d.x, kernels::view(d.w)));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bm_row_sum_omp(benchmark::State& state)
{
    const Data& d = data(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(kernels::omp::weighted_row_sum(d.x, kernels::view(d.w)));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

} // namespace

BENCHMARK(bm_dot_serial)->RangeMultiplier(8)->Range(1 << 10, 1 << 22);
BENCHMARK(bm_dot_omp)->RangeMultiplier(8)->Range(1 << 10, 1 << 22);
BENCHMARK(bm_gram_serial)->RangeMultiplier(8)->Range(1 << 10, 1 << 19);
BENCHMARK(bm_gram_omp)->RangeMultiplier(8)->Range(1 << 10, 1 << 19);
BENCHMARK(bm_row_sum_serial)->RangeMultiplier(8)->Range(1 << 10, 1 << 19);
BENCHMARK(bm_row_sum_omp)->RangeMultiplier(8)->Range(1 << 10, 1 << 19);

BENCHMARK_MAIN();
