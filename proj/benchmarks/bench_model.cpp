#include <benchmark/benchmark.h>

#include "hdnet/model.hpp"
#include "hdnet/params.hpp"
#include "hdnet/random.hpp"
#include "hdnet/spatial_gnn.hpp"

using namespace hdnet;

namespace {

ad::Matrix random_rows(std::size_t rows, Rng& rng) {
  ad::Matrix m(rows, 4);
  for (auto& x : m.values()) x = rng.uniform(-2, 2);
  return m;
}

GaitSample random_sample(std::size_t frames, std::size_t points, Rng& rng) {
  GaitSample s;
  s.frames = frames;
  s.points = points;
  s.cloud.resize(frames * points * GaitSample::kChannels);
  s.flow.resize(s.cloud.size());
  for (auto& x : s.cloud) x = rng.normal();
  for (auto& x : s.flow) x = rng.normal();
  return s;
}

// Default-width backbone on a T = 20, N = 16 window.
void BM_BackboneForward(benchmark::State& state) {
  ParamStore store;
  Rng rng(1);
  const SpatialBackbone net(BackboneConfig{}, store, "cloud", rng);
  const ad::Matrix rows = random_rows(20 * 16, rng);
  for (auto _ : state) {
    ad::Tape tape(false);
    benchmark::DoNotOptimize(net.forward(tape, store, rows, 20).value());
  }
}
BENCHMARK(BM_BackboneForward)->Unit(benchmark::kMillisecond);

void BM_BackboneForwardBackward(benchmark::State& state) {
  ParamStore store;
  Rng rng(2);
  const SpatialBackbone net(BackboneConfig{}, store, "cloud", rng);
  const ad::Matrix rows = random_rows(20 * 16, rng);
  for (auto _ : state) {
    ad::Tape tape;
    const ad::Value loss = ad::sum_all(net.forward(tape, store, rows, 20));
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_BackboneForwardBackward)->Unit(benchmark::kMillisecond);

void BM_ModelInference(benchmark::State& state) {
  ModelConfig config;
  config.classes = 10;
  ParamStore store;
  const HdNet net(config, store, 3);
  Rng rng(4);
  const GaitSample sample = random_sample(20, 16, rng);
  for (auto _ : state) benchmark::DoNotOptimize(net.predict(store, sample));
}
BENCHMARK(BM_ModelInference)->Unit(benchmark::kMillisecond);

}  // namespace
