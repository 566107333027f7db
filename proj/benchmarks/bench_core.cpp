#include <benchmark/benchmark.h>

#include "freewalk/factor_green.hpp"
#include "freewalk/measures.hpp"
#include "freewalk/product_green.hpp"

using namespace freewalk;

namespace {

const FreeProductSpec kF2 = FreeProductSpec::lattice({1, 1});

void BM_ConvolutionPowers(benchmark::State& state) {
  const auto base = lift(AdaptedMeasure::simple(kF2, {0.5, 0.5}));
  for (auto _ : state) {
    ConvolutionTable t(base);
    t.extend_to(static_cast<int>(state.range(0)));
    benchmark::DoNotOptimize(t.power(static_cast<int>(state.range(0))).size());
  }
}
BENCHMARK(BM_ConvolutionPowers)->Arg(4)->Arg(6)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_Transition(benchmark::State& state) {
  ConvolutionTable t(lift(AdaptedMeasure::simple(kF2, {0.5, 0.5})));
  t.extend_to(8);
  const auto y = parse_element(kF2, "f1:(1).f2:(-1).f1:(2)");
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(t.transition(y, n));
}
BENCHMARK(BM_Transition)->Arg(8)->Arg(16)->Unit(benchmark::kMicrosecond);

void BM_FactorGreen(benchmark::State& state) {
  FactorGreenOptions o;
  o.mode = static_cast<QuadratureMode>(state.range(0));
  for (auto _ : state) {
    // fresh evaluator: table construction is part of the cost
    const FactorGreenEvaluator z3(LatticeMeasure::simple(1, 3), o);
    benchmark::DoNotOptimize(z3.green({1, 0, 0}, 0.99).value);
  }
}
BENCHMARK(BM_FactorGreen)
    ->Arg(static_cast<int>(QuadratureMode::laplace))
    ->Arg(static_cast<int>(QuadratureMode::grid))
    ->Unit(benchmark::kMillisecond);

void BM_ProductGreen(benchmark::State& state) {
  const GreenCalculus g(AdaptedMeasure::simple(FreeProductSpec::lattice({3, 1}), {0.75, 0.25}));
  const auto y = parse_element(g.spec(), "f1:(1,0,0).f2:(1).f1:(0,-1,1)");
  double r = 0.5 * g.R();
  for (auto _ : state) {
    // new r each time so the per-level cache does not answer
    r = r < 0.99 * g.R() ? r * 1.0001 : 0.5 * g.R();
    benchmark::DoNotOptimize(g.green(y, r));
  }
}
BENCHMARK(BM_ProductGreen)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
