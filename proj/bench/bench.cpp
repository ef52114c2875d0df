// Serial vs OpenMP kernels on the first backbone layers of a 50x50 input.
// Set OMP_NUM_THREADS to vary the parallel backend's thread count.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "pufauth/bloom.hpp"
#include "pufauth/kernels.hpp"

using namespace pufauth::kernels;

namespace {

std::vector<float> filled(std::size_t n, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<float> nd;
    std::vector<float> v(n);
    for (auto& x : v) x = nd(rng);
    return v;
}

ConvShape conv_shape(const benchmark::State& st) {
    ConvShape s;
    s.batch = static_cast<int>(st.range(0));
    s.in_c = static_cast<int>(st.range(1));
    s.out_c = static_cast<int>(st.range(2));
    s.in_h = s.in_w = static_cast<int>(st.range(3));
    s.kernel = 3;
    s.stride = 2;
    s.pad = 1;
    return s;
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& st) {
    const auto s = conv_shape(st);
    const auto in = filled(s.in_size(), 1), w = filled(s.weight_size(), 2), b = filled(s.out_c, 3);
    std::vector<float> out(s.out_size());
    for (auto _ : st) {
        if constexpr (Parallel)
            parallel::conv2d_forward<float>(s, in, w, b, out);
        else
            serial::conv2d_forward<float>(s, in, w, b, out);
        benchmark::DoNotOptimize(out.data());
    }
    st.SetItemsProcessed(st.iterations() * std::int64_t(s.out_size()));
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& st) {
    const auto s = conv_shape(st);
    const auto in = filled(s.in_size(), 1), w = filled(s.weight_size(), 2), dout = filled(s.out_size(), 3);
    std::vector<float> dw(s.weight_size()), db(s.out_c), din(s.in_size());
    for (auto _ : st) {
        if constexpr (Parallel) {
            parallel::conv2d_backward_params<float>(s, in, dout, dw, db);
            parallel::conv2d_backward_input<float>(s, w, dout, din);
        } else {
            serial::conv2d_backward_params<float>(s, in, dout, dw, db);
            serial::conv2d_backward_input<float>(s, w, dout, din);
        }
        benchmark::DoNotOptimize(din.data());
        benchmark::DoNotOptimize(dw.data());
    }
}

template <bool Parallel>
void BM_DenseForward(benchmark::State& st) {
    const DenseShape s{static_cast<int>(st.range(0)), static_cast<int>(st.range(1)), static_cast<int>(st.range(2))};
    const auto x = filled(std::size_t(s.batch) * s.in, 1), w = filled(std::size_t(s.in) * s.out, 2),
               b = filled(s.out, 3);
    std::vector<float> y(std::size_t(s.batch) * s.out);
    for (auto _ : st) {
        if constexpr (Parallel)
            parallel::dense_forward<float>(s, x, w, b, y);
        else
            serial::dense_forward<float>(s, x, w, b, y);
        benchmark::DoNotOptimize(y.data());
    }
}

void BM_BloomQuery(benchmark::State& st) {
    auto f = pufauth::BloomFilter::for_capacity(1'000'000, 1e-4);
    std::vector<std::uint8_t> key(256, 7);
    for (int i = 0; i < 1000; ++i) {
        key[0] = std::uint8_t(i);
        key[1] = std::uint8_t(i >> 8);
        f.insert(key);
    }
    std::uint64_t i = 0;
    for (auto _ : st) {
        key[2] = std::uint8_t(++i);
        benchmark::DoNotOptimize(f.query(key));
    }
}

// batch, in_c, out_c, side: the three stride-2 stages on a 50x50 input.
void conv_args(benchmark::internal::Benchmark* b) {
    b->Args({32, 3, 16, 50})->Args({32, 16, 32, 25})->Args({32, 32, 64, 13})->Args({1, 3, 16, 50});
}

}  // namespace

BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/serial")->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/openmp")->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/serial")->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/openmp")->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DenseForward<false>)->Name("dense_forward/serial")->Args({256, 64, 256})->Args({256, 256, 1});
BENCHMARK(BM_DenseForward<true>)->Name("dense_forward/openmp")->Args({256, 64, 256})->Args({256, 256, 1});
BENCHMARK(BM_BloomQuery)->Name("bloom_query/256B");

BENCHMARK_MAIN();
