#include <benchmark/benchmark.h>

#include "stone/defense.h"
#include "stone/model.h"
#include "stone/placement.h"
#include "stone/surrogate.h"
#include "stone/trigger.h"

namespace stone {
namespace {

void BM_SorFilter(benchmark::State& state) {
  const auto cloud = synth_shape(ShapeKind::kTorus, static_cast<int>(state.range(0)), 0.01, 1);
  const SorParams p{.top_n = 15, .del_n = 8};
  for (auto _ : state) benchmark::DoNotOptimize(sor_filter(cloud, p));
}
BENCHMARK(BM_SorFilter)->Arg(256)->Arg(1024)->Arg(2048);

void BM_Implant(benchmark::State& state) {
  const auto cloud = synth_shape(ShapeKind::kCross, 1024, 0.01, 2);
  const auto spec = make_dual_trigger({0.95, 0.95, 0.05}, {0.95, 0.95, 0.95}, 0);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(implant(cloud, spec, seed++));
}
BENCHMARK(BM_Implant);

void BM_FeatureMap(benchmark::State& state) {
  const auto cloud = synth_shape(ShapeKind::kCylinder, 2048, 0.01, 3);
  SurrogateConfig cfg;
  cfg.smoothing = static_cast<double>(state.range(0)) / 2.0;
  for (auto _ : state) benchmark::DoNotOptimize(feature_map(cloud, cfg));
}
BENCHMARK(BM_FeatureMap)->Arg(0)->Arg(3);

void BM_ModelPredict(benchmark::State& state) {
  const MiniPointModel m(ModelShape{.num_classes = 6}, 1);
  const auto cloud = synth_shape(ShapeKind::kPlane, static_cast<int>(state.range(0)), 0.01, 4);
  for (auto _ : state) benchmark::DoNotOptimize(m.predict(cloud));
}
BENCHMARK(BM_ModelPredict)->Arg(256)->Arg(1024);

void BM_ModelLossGrad(benchmark::State& state) {
  const MiniPointModel m(ModelShape{.num_classes = 6}, 1);
  const auto cloud = synth_shape(ShapeKind::kSphereShell, 256, 0.01, 5);
  std::vector<double> grad(m.num_parameters());
  for (auto _ : state) benchmark::DoNotOptimize(m.loss(cloud, 2, &grad));
}
BENCHMARK(BM_ModelLossGrad);

void BM_GreedyPlacement(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(greedy_single_placement(n));
}
BENCHMARK(BM_GreedyPlacement)->Arg(4)->Arg(16);

void BM_MaximinOracle(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(maximin_oracle(n));
}
BENCHMARK(BM_MaximinOracle)->Arg(4)->Arg(6);

}  // namespace
}  // namespace stone

BENCHMARK_MAIN();
