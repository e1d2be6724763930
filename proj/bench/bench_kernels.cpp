// Serial reference kernels against their OpenMP counterparts, plus batch
// decoding with and without image-level parallelism.

#include <benchmark/benchmark.h>

#include <vector>

#include "lacap/decode/decoder.hpp"
#include "lacap/numcore/kernels.hpp"
#include "lacap/numcore/rng.hpp"
#include "lacap/sceneworld/world.hpp"

using namespace lacap;
namespace kn = num::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  num::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <auto Kernel>
void matmul_case(benchmark::State& state) {
  const auto r = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto c = static_cast<std::size_t>(state.range(2));
  const auto a = random_vec(r * k, 1), b = random_vec(k * c, 2);
  std::vector<double> out(r * c);
  for (auto _ : state) {
    Kernel(a, b, out, r, k, c);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * r * k * c));
}

template <auto Kernel>
void acc_at_case(benchmark::State& state) {
  const auto r = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto c = static_cast<std::size_t>(state.range(2));
  const auto a = random_vec(r * k, 3), g = random_vec(r * c, 4);
  std::vector<double> out(k * c);
  for (auto _ : state) {
    Kernel(a, g, out, r, k, c);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * r * k * c));
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({256, 64, 1})->Args({256, 128, 1})->Args({64, 64, 64})->Args({128, 256, 128});
}

BENCHMARK(matmul_case<kn::serial::matmul>)->Name("matmul/serial")->Apply(shapes);
BENCHMARK(matmul_case<kn::matmul>)->Name("matmul/omp")->Apply(shapes);
BENCHMARK(acc_at_case<kn::serial::matmul_acc_at>)->Name("matmul_acc_at/serial")->Apply(shapes);
BENCHMARK(acc_at_case<kn::matmul_acc_at>)->Name("matmul_acc_at/omp")->Apply(shapes);

void decode_case(benchmark::State& state, bool parallel) {
  const world::CaptionGrammar grammar;
  const policy::PolicyNet policy({grammar.vocab().size(), world::kDefaultFeatureDim, 64}, 11);
  critic::ValueConfig vc;
  vc.vocab_size = grammar.vocab().size();
  const critic::ValueNet value(vc, 12);
  const decode::ModelContext ctx(policy, &value);
  std::vector<world::Feature> features;
  for (std::size_t i = 0; i < 16; ++i) features.push_back(random_vec(world::kDefaultFeatureDim, 100 + i));
  const decode::BeamConfig cfg{static_cast<std::size_t>(state.range(0)), 0.4, world::kMaxCaptionLength};
  for (auto _ : state) benchmark::DoNotOptimize(decode::decode_batch(ctx, features, cfg, parallel));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * features.size()));
}

BENCHMARK_CAPTURE(decode_case, serial, false)->Name("decode_batch/serial")->Arg(1)->Arg(10);
BENCHMARK_CAPTURE(decode_case, parallel, true)->Name("decode_batch/omp")->Arg(1)->Arg(10);

}  // namespace

BENCHMARK_MAIN();
