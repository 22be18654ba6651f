// Serial reference vs OpenMP kernels, plus a planning query on a full-size map.
#include <benchmark/benchmark.h>

#include <random>

#include "yor/mapping.hpp"
#include "yor/planner.hpp"
#include "yor/sim.hpp"

using namespace yor;

namespace {

mapping::PointCloud random_cloud(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  mapping::PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.push_back({u(rng), 0.5 * u(rng), u(rng) + 3.0});
  return c;
}

mapping::OccupancyGrid cluttered_grid(int size, std::uint64_t seed) {
  mapping::OccupancyGrid g({-5.0, -5.0, 0.05, size, size});
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pos(0, size - 1);
  for (auto& c : g.cells) c = mapping::CellState::kFree;
  for (int k = 0; k < size * size / 200; ++k) g.at(pos(rng), pos(rng)) = mapping::CellState::kOccupied;
  return g;
}

sim::Scene bench_scene() {
  sim::Scene s;
  s.boxes.push_back({1.0, 2.0, 2.0, 3.0, 1.0});
  s.boxes.push_back({-2.0, 3.0, -1.0, 4.0, 0.6});
  s.walkers.push_back({0.25, 1.7, 0.8, 0.0, true, {{0.0, 2.5}, {0.5, 2.5}}});
  return s;
}

void BM_OutliersSerial(benchmark::State& st) {
  const auto cloud = random_cloud(static_cast<std::size_t>(st.range(0)), 1);
  for (auto _ : st) benchmark::DoNotOptimize(mapping::serial::reject_outliers(cloud));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_OutliersParallel(benchmark::State& st) {
  const auto cloud = random_cloud(static_cast<std::size_t>(st.range(0)), 1);
  for (auto _ : st) benchmark::DoNotOptimize(mapping::reject_outliers(cloud));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_InflateSerial(benchmark::State& st) {
  const auto grid = cluttered_grid(static_cast<int>(st.range(0)), 2);
  for (auto _ : st) benchmark::DoNotOptimize(mapping::serial::inflate(grid));
}

void BM_InflateParallel(benchmark::State& st) {
  const auto grid = cluttered_grid(static_cast<int>(st.range(0)), 2);
  for (auto _ : st) benchmark::DoNotOptimize(mapping::inflate(grid));
}

void BM_RenderSerial(benchmark::State& st) {
  const auto scene = bench_scene();
  const auto w = sim::initial_state(scene);
  const CounterRng rng(3);
  std::uint64_t frame = 0;
  for (auto _ : st) benchmark::DoNotOptimize(sim::serial::render_depth(scene, w, scene.camera, rng, {frame++, false, true}));
}

void BM_RenderParallel(benchmark::State& st) {
  const auto scene = bench_scene();
  const auto w = sim::initial_state(scene);
  const CounterRng rng(3);
  std::uint64_t frame = 0;
  for (auto _ : st) benchmark::DoNotOptimize(sim::render_depth(scene, w, scene.camera, rng, {frame++, false, true}));
}

void BM_Plan200(benchmark::State& st) {
  const auto cost = mapping::inflate(cluttered_grid(200, 4));
  auto map = cost;
  // Keep both ends open.
  for (int r = 0; r < 10; ++r)
    for (int c = 0; c < 10; ++c) {
      map.cost[map.geometry.index(c, r)] = 0;
      map.cost[map.geometry.index(199 - c, 199 - r)] = 0;
    }
  for (auto _ : st) {
    benchmark::DoNotOptimize(planner::plan(map, Pose2(-4.8, -4.8, 0.0), Pose2(4.8, 4.8, 0.0)));
  }
}

}  // namespace

BENCHMARK(BM_OutliersSerial)->Arg(2000)->Arg(20000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_OutliersParallel)->Arg(2000)->Arg(20000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_InflateSerial)->Arg(200)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_InflateParallel)->Arg(200)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_RenderSerial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_RenderParallel)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Plan200)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
