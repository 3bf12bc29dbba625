// Throughput comparison of the OpenMP kernels against their serial reference
// implementations on desk-scale shapes.

#include <cstdint>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "bitsnn/kernels.hpp"

namespace {

using bitsnn::kernels::Conv2dShape;

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (float& x : v) x = dist(rng);
  return v;
}

Conv2dShape conv_shape() {
  Conv2dShape s;
  s.in_c = 16;
  s.in_h = 32;
  s.in_w = 32;
  s.out_c = 32;
  s.k_h = 3;
  s.k_w = 3;
  s.stride = 1;
  s.pad = 1;
  return s;
}

double conv_macs_per_call(const Conv2dShape& s, std::size_t batch) {
  return double(batch) * double(s.out_elems()) *
         double(s.in_c * s.k_h * s.k_w);
}

template <typename Fn>
void conv_forward_bench(benchmark::State& state, Fn&& fn) {
  const std::size_t batch = std::size_t(state.range(0));
  const Conv2dShape s = conv_shape();
  const std::vector<float> in = random_vec(batch * s.in_elems(), 1);
  const std::vector<float> w = random_vec(s.weight_elems(), 2);
  std::vector<float> out(batch * s.out_elems());
  for (auto _ : state) {
    fn(in, w, out, s, batch);
    benchmark::DoNotOptimize(out.data());
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(int64_t(state.iterations()) *
                          int64_t(conv_macs_per_call(s, batch)));
}

void BM_conv_forward_omp(benchmark::State& state) {
  conv_forward_bench(state, [](auto&&... a) {
    bitsnn::kernels::conv2d_forward(a...);
  });
}

void BM_conv_forward_serial(benchmark::State& state) {
  conv_forward_bench(state, [](auto&&... a) {
    bitsnn::kernels::conv2d_forward_serial(a...);
  });
}

template <typename Fn>
void conv_grad_weights_bench(benchmark::State& state, Fn&& fn) {
  const std::size_t batch = std::size_t(state.range(0));
  const Conv2dShape s = conv_shape();
  const std::vector<float> in = random_vec(batch * s.in_elems(), 3);
  const std::vector<float> g_out = random_vec(batch * s.out_elems(), 4);
  std::vector<float> g_w(s.weight_elems());
  for (auto _ : state) {
    fn(in, g_out, g_w, s, batch);
    benchmark::DoNotOptimize(g_w.data());
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(int64_t(state.iterations()) *
                          int64_t(conv_macs_per_call(s, batch)));
}

void BM_conv_grad_weights_omp(benchmark::State& state) {
  conv_grad_weights_bench(state, [](auto&&... a) {
    bitsnn::kernels::conv2d_grad_weights(a...);
  });
}

void BM_conv_grad_weights_serial(benchmark::State& state) {
  conv_grad_weights_bench(state, [](auto&&... a) {
    bitsnn::kernels::conv2d_grad_weights_serial(a...);
  });
}

template <typename Fn>
void dense_forward_bench(benchmark::State& state, Fn&& fn) {
  const std::size_t batch = std::size_t(state.range(0));
  const std::size_t in_dim = 1024, out_dim = 512;
  const std::vector<float> in = random_vec(batch * in_dim, 5);
  const std::vector<float> w = random_vec(out_dim * in_dim, 6);
  const std::vector<float> bias = random_vec(out_dim, 7);
  std::vector<float> out(batch * out_dim);
  for (auto _ : state) {
    fn(in, w, bias, out, in_dim, out_dim, batch);
    benchmark::DoNotOptimize(out.data());
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(int64_t(state.iterations()) *
                          int64_t(batch * in_dim * out_dim));
}

void BM_dense_forward_omp(benchmark::State& state) {
  dense_forward_bench(state, [](auto&&... a) {
    bitsnn::kernels::dense_forward(a...);
  });
}

void BM_dense_forward_serial(benchmark::State& state) {
  dense_forward_bench(state, [](auto&&... a) {
    bitsnn::kernels::dense_forward_serial(a...);
  });
}

}  // namespace

BENCHMARK(BM_conv_forward_omp)->Arg(1)->Arg(16);
BENCHMARK(BM_conv_forward_serial)->Arg(1)->Arg(16);
BENCHMARK(BM_conv_grad_weights_omp)->Arg(16);
BENCHMARK(BM_conv_grad_weights_serial)->Arg(16);
BENCHMARK(BM_dense_forward_omp)->Arg(64);
BENCHMARK(BM_dense_forward_serial)->Arg(64);

BENCHMARK_MAIN();
