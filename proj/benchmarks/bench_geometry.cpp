#include <benchmark/benchmark.h>

#include <vector>

#include "hdnet/point_cloud.hpp"
#include "hdnet/preprocess.hpp"
#include "hdnet/random.hpp"
#include "hdnet/spatial_gnn.hpp"

using namespace hdnet;

namespace {

RadarFrame random_frame(std::size_t n, Rng& rng, std::size_t index) {
  RadarFrame f;
  f.index = index;
  for (std::size_t i = 0; i < n; ++i) {
    f.points.push_back({rng.uniform(-2, 2), rng.uniform(0, 5), rng.uniform(0, 2), rng.uniform(-3, 3)});
  }
  return f;
}

void BM_PointFlow(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  PointStream stream;
  for (std::size_t t = 0; t < 20; ++t) stream.frames.push_back(random_frame(n, rng, t));
  for (auto _ : state) benchmark::DoNotOptimize(compute_point_flow(stream));
  state.SetItemsProcessed(state.iterations() * 19 * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_PointFlow)->Arg(16)->Arg(64)->Arg(256);

void BM_FurthestPointSample(benchmark::State& state) {
  Rng rng(2);
  const RadarFrame frame = random_frame(static_cast<std::size_t>(state.range(0)), rng, 0);
  for (auto _ : state) benchmark::DoNotOptimize(furthest_point_sample(frame, 16, 3));
}
BENCHMARK(BM_FurthestPointSample)->Arg(40)->Arg(200);

void BM_KnnGraph(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  ad::Matrix coords(n, 4);
  for (auto& x : coords.values()) x = rng.uniform(-1, 1);
  for (auto _ : state) benchmark::DoNotOptimize(knn_graph(coords, 8));
}
BENCHMARK(BM_KnnGraph)->Arg(16)->Arg(64)->Arg(256);

void BM_Hungarian(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  std::vector<double> cost(n * n);
  for (auto& c : cost) c = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(hungarian_assign(cost, n, n));
}
BENCHMARK(BM_Hungarian)->Arg(6)->Arg(32)->Arg(128);

void BM_Dbscan(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  std::vector<Position> points(n);
  for (auto& p : points) p = {rng.uniform(-3, 3), rng.uniform(0, 6), rng.uniform(0, 2)};
  for (auto _ : state) benchmark::DoNotOptimize(dbscan(points, 0.5, 10));
}
BENCHMARK(BM_Dbscan)->Arg(64)->Arg(512);

}  // namespace
