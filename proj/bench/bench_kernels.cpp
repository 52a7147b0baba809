#include <benchmark/benchmark.h>

#include <vector>

#include "stylerl/kernels.hpp"
#include "stylerl/rng.hpp"

namespace k = stylerl::kernels;

namespace {

std::vector<double> random_block(std::size_t n, std::uint64_t seed) {
    stylerl::Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v)
        x = rng.normal(0.0, 1.0);
    return v;
}

using MatmulFn = void (*)(std::size_t, std::size_t, std::size_t, const double*, std::size_t, const double*,
                          std::size_t, double*, std::size_t);

void run_matmul(benchmark::State& state, MatmulFn fn) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_block(n * n, 1), b = random_block(n * n, 2);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        std::fill(c.begin(), c.end(), 0.0);
        fn(n, n, n, a.data(), n, b.data(), n, c.data(), n);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

void run_softmax(benchmark::State& state, void (*fn)(std::size_t, std::size_t, const double*, double*)) {
    const auto rows = static_cast<std::size_t>(state.range(0));
    const std::size_t cols = 1300; // about the synthetic vocabulary
    const auto in = random_block(rows * cols, 3);
    std::vector<double> out(in.size());
    for (auto _ : state) {
        fn(rows, cols, in.data(), out.data());
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows * cols));
}

void BM_MatmulSerial(benchmark::State& s) { run_matmul(s, k::serial::matmul); }
void BM_MatmulParallel(benchmark::State& s) { run_matmul(s, k::parallel::matmul); }
void BM_MatmulTnSerial(benchmark::State& s) { run_matmul(s, k::serial::matmul_tn); }
void BM_MatmulTnParallel(benchmark::State& s) { run_matmul(s, k::parallel::matmul_tn); }
void BM_MatmulNtSerial(benchmark::State& s) { run_matmul(s, k::serial::matmul_nt); }
void BM_MatmulNtParallel(benchmark::State& s) { run_matmul(s, k::parallel::matmul_nt); }
void BM_SoftmaxSerial(benchmark::State& s) { run_softmax(s, k::serial::softmax_rows); }
void BM_SoftmaxParallel(benchmark::State& s) { run_softmax(s, k::parallel::softmax_rows); }

} // namespace

BENCHMARK(BM_MatmulSerial)->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_MatmulParallel)->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_MatmulTnSerial)->Arg(128);
BENCHMARK(BM_MatmulTnParallel)->Arg(128);
BENCHMARK(BM_MatmulNtSerial)->Arg(128);
BENCHMARK(BM_MatmulNtParallel)->Arg(128);
BENCHMARK(BM_SoftmaxSerial)->Arg(32)->Arg(128);
BENCHMARK(BM_SoftmaxParallel)->Arg(32)->Arg(128);

BENCHMARK_MAIN();
