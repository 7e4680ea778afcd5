#include <benchmark/benchmark.h>

#include <random>

#include "trackforge/diffusion.hpp"
#include "trackforge/homography.hpp"
#include "trackforge/metrics.hpp"
#include "trackforge/synthkin.hpp"
#include "trackforge/trainer.hpp"

namespace {

using namespace trackforge;

NetConfig bench_net() {
  NetConfig net;
  net.depth = 4;
  net.width = 128;
  net.heads = 4;
  net.feature_dim = 16;
  net.t_cond = 4;
  net.horizon = 32;
  return net;
}

TrainExample bench_example(const NetConfig& net, int n_points) {
  GenConfig gen;
  gen.n_points = n_points;
  gen.seed = 11;
  ClipData clip = generate_clip(gen, 0);
  TrackSet tracks = clip.scene.tracks;
  tracks.t_cond = net.t_cond;
  Eigen::MatrixXd feats(tracks.n, net.feature_dim);
  for (int i = 0; i < tracks.n; ++i)
    for (int c = 0; c < net.feature_dim; ++c)
      feats(i, c) = double(clip.features[size_t(i) * net.feature_dim + size_t(c)]);
  return prepare_example(tracks, feats, net);
}

void BM_Forward(benchmark::State& state) {
  NetConfig net = bench_net();
  ModelParams params = init_params(net, 1);
  TrainExample ex = bench_example(net, int(state.range(0)));
  Eigen::MatrixXd z = target_matrix(ex.clean);
  TokenBatch batch = build_tokens(net, z, ex.cond, ex.features, 500, ex.valid);
  for (auto _ : state) benchmark::DoNotOptimize(forward(params, batch));
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(64)->Arg(128);

void BM_TrainStep(benchmark::State& state) {
  NetConfig net = bench_net();
  ModelParams params = init_params(net, 1);
  TrainExample ex = bench_example(net, 64);
  NoiseSchedule sched;
  std::mt19937_64 rng(3);
  for (auto _ : state) {
    params.zero_grad();
    benchmark::DoNotOptimize(
        training_loss(params, ex.clean, ex.cond, ex.features, ex.valid, sched, rng));
  }
}
BENCHMARK(BM_TrainStep);

void BM_RansacStabilization(benchmark::State& state) {
  GenConfig gen;
  gen.seed = 5;
  ClipData clip = generate_clip(gen, 0);
  int t = clip.scene.tracks.t;
  std::vector<uint8_t> vis(size_t(clip.camera.n_background) * t, 1);
  for (auto _ : state)
    benchmark::DoNotOptimize(
        estimate_stabilization(clip.camera.background, clip.camera.n_background, t, vis, {}, 7));
}
BENCHMARK(BM_RansacStabilization);

void BM_FvmdFeatures(benchmark::State& state) {
  GenConfig gen;
  gen.seed = 9;
  ClipData clip = generate_clip(gen, 0);
  EvalConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(fvmd_features(clip.scene.tracks, cfg));
}
BENCHMARK(BM_FvmdFeatures);

}  // namespace

BENCHMARK_MAIN();
