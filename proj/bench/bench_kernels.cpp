// Serial reference vs OpenMP kernels. Run with OMP_NUM_THREADS set to compare
// scaling, e.g. OMP_NUM_THREADS=8 ./build/bench/bench_kernels
#include <benchmark/benchmark.h>

#include <random>

#include "wolly/kernels.hpp"

using namespace wolly::kernels;

namespace {

std::vector<double> random_matrix(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> m(n);
    for (auto& v : m) v = u(rng);
    return m;
}

template <auto Kernel>
void BM_Nearest(benchmark::State& state) {
    constexpr std::size_t dim = 128;
    auto rows = random_matrix(static_cast<std::size_t>(state.range(0)) * dim, 1);
    auto probe = random_matrix(dim, 2);
    for (auto _ : state) benchmark::DoNotOptimize(Kernel(rows, dim, probe));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <auto Kernel>
void BM_CropResize(benchmark::State& state) {
    RgbImage src{1920, 1080, std::vector<std::uint8_t>(1920 * 1080 * 3, 7)};
    auto side = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(Kernel(src, Box{100, 50, 1280, 900}, side, side));
}

template <auto Kernel>
void BM_ColumnAp(benchmark::State& state) {
    auto n = static_cast<std::size_t>(state.range(0));
    constexpr std::size_t cols = 26;
    auto scores = random_matrix(n * cols, 3);
    std::vector<std::uint8_t> labels(n * cols);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = scores[i] > 0.6 ? 1 : 0;
    for (auto _ : state) benchmark::DoNotOptimize(Kernel(scores, labels, cols));
}

}  // namespace

BENCHMARK(BM_Nearest<nearest_serial>)->Arg(1'000)->Arg(100'000);
BENCHMARK(BM_Nearest<nearest_parallel>)->Arg(1'000)->Arg(100'000);
BENCHMARK(BM_CropResize<crop_resize_serial>)->Arg(128)->Arg(224);
BENCHMARK(BM_CropResize<crop_resize_parallel>)->Arg(128)->Arg(224);
BENCHMARK(BM_ColumnAp<column_ap_serial>)->Arg(3'315)->Arg(23'266);
BENCHMARK(BM_ColumnAp<column_ap_parallel>)->Arg(3'315)->Arg(23'266);

BENCHMARK_MAIN();
