// Serial reference vs OpenMP kernels at sizes seen in training.

#include <benchmark/benchmark.h>

#include <algorithm>
#include <random>
#include <vector>

#include "rsovseg/kernels.hpp"

namespace {

using namespace rsovseg::kernels;

std::vector<double> random_values(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  GemmShape s;
  s.m = s.n = s.k = n;
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      gemm(s, a, b, c, false);
    } else {
      serial::gemm(s, a, b, c, false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

// Window-partition style gather: a fixed permutation of a [rows, 64] buffer.
template <bool Parallel>
void BM_Gather(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0)), width = std::size_t{64};
  const auto in = random_values(rows * width, 3);
  std::vector<std::int64_t> index(rows * width);
  std::mt19937_64 rng(4);
  std::vector<std::size_t> perm(rows);
  for (std::size_t i = 0; i < rows; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < width; ++c) index[r * width + c] = static_cast<std::int64_t>(perm[r] * width + c);
  std::vector<double> out(index.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      gather(in, index, out);
    } else {
      serial::gather(in, index, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(out.size() * sizeof(double)));
}

template <bool Parallel>
void BM_Softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0)), cols = std::size_t{64};
  const auto in = random_values(rows * cols, 5);
  std::vector<double> out(in.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      softmax_rows(in, cols, out);
    } else {
      serial::softmax_rows(in, cols, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_Gelu(benchmark::State& state) {
  const auto in = random_values(static_cast<std::size_t>(state.range(0)), 6);
  std::vector<double> out(in.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      gelu(in, out);
    } else {
      serial::gelu(in, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/openmp")->Arg(64)->Arg(256)->UseRealTime();
BENCHMARK(BM_Gather<false>)->Name("gather/serial")->Arg(4096)->Arg(65536);
BENCHMARK(BM_Gather<true>)->Name("gather/openmp")->Arg(4096)->Arg(65536)->UseRealTime();
BENCHMARK(BM_Softmax<false>)->Name("softmax/serial")->Arg(4096)->Arg(65536);
BENCHMARK(BM_Softmax<true>)->Name("softmax/openmp")->Arg(4096)->Arg(65536)->UseRealTime();
BENCHMARK(BM_Gelu<false>)->Name("gelu/serial")->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_Gelu<true>)->Name("gelu/openmp")->Arg(1 << 16)->Arg(1 << 20)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
