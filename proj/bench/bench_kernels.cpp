// Serial reference vs OpenMP convolution kernels at decoder-like shapes.
// Both variants produce identical bits; only wall time differs.

#include "pnerv/kernels.hpp"
#include "pnerv/model.hpp"

#include <benchmark/benchmark.h>

using namespace pnerv;

namespace {

struct ConvCase {
    Tensor x, w, b, gy;
    kernels::ConvGeometry g{1, 1};
};

// args: channels, height (width is 2 * height)
ConvCase make_case(const benchmark::State& state) {
    const auto c = static_cast<std::size_t>(state.range(0));
    const auto h = static_cast<std::size_t>(state.range(1));
    Rng rng(1);
    ConvCase k;
    k.x = uniform({c, h, 2 * h}, rng);
    k.w = uniform({c, c, 3, 3}, rng);
    k.b = uniform({c}, rng);
    k.gy = uniform({c, h, 2 * h}, rng);
    return k;
}

void set_counters(benchmark::State& state) {
    const double c = static_cast<double>(state.range(0)), h = static_cast<double>(state.range(1));
    state.counters["MACs"] = benchmark::Counter(c * c * 9 * h * 2 * h, benchmark::Counter::kIsIterationInvariantRate);
    state.counters["threads"] = kernels::max_threads();
}

template <Tensor (*Fn)(const Tensor&, const Tensor&, const Tensor*, kernels::ConvGeometry)>
void BM_Forward(benchmark::State& state) {
    const ConvCase k = make_case(state);
    for (auto _ : state) benchmark::DoNotOptimize(Fn(k.x, k.w, &k.b, k.g));
    set_counters(state);
}

template <Tensor (*Fn)(const Tensor&, const Tensor&, kernels::ConvGeometry, const Shape&)>
void BM_BackwardInput(benchmark::State& state) {
    const ConvCase k = make_case(state);
    for (auto _ : state) benchmark::DoNotOptimize(Fn(k.gy, k.w, k.g, k.x.shape()));
    set_counters(state);
}

template <Tensor (*Fn)(const Tensor&, const Tensor&, std::size_t, kernels::ConvGeometry)>
void BM_BackwardWeight(benchmark::State& state) {
    const ConvCase k = make_case(state);
    for (auto _ : state) benchmark::DoNotOptimize(Fn(k.x, k.gy, 3, k.g));
    set_counters(state);
}

void shapes(benchmark::internal::Benchmark* b) {
    b->Args({32, 8})->Args({16, 32})->Args({8, 64})->Unit(benchmark::kMicrosecond);
}

void BM_DecodeDeskFrame(benchmark::State& state) {
    const PNeRVModel m = build_model(PNeRVConfig::desk());
    const Embedding e = encode(m, synthetic::moving_gradient(1, 64, 128, 1.0, 0), 0);
    for (auto _ : state) benchmark::DoNotOptimize(decode_frame(m, e));
}

}  // namespace

BENCHMARK(BM_Forward<kernels::serial::conv2d_forward>)->Name("conv_forward/serial")->Apply(shapes);
BENCHMARK(BM_Forward<kernels::omp::conv2d_forward>)->Name("conv_forward/omp")->Apply(shapes);
BENCHMARK(BM_BackwardInput<kernels::serial::conv2d_backward_input>)->Name("conv_backward_input/serial")->Apply(shapes);
BENCHMARK(BM_BackwardInput<kernels::omp::conv2d_backward_input>)->Name("conv_backward_input/omp")->Apply(shapes);
BENCHMARK(BM_BackwardWeight<kernels::serial::conv2d_backward_weight>)->Name("conv_backward_weight/serial")->Apply(shapes);
BENCHMARK(BM_BackwardWeight<kernels::omp::conv2d_backward_weight>)->Name("conv_backward_weight/omp")->Apply(shapes);
BENCHMARK(BM_DecodeDeskFrame)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
