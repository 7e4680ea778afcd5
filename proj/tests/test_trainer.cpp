#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "trackforge/trainer.hpp"

using namespace trackforge;
namespace fs = std::filesystem;

namespace {

NetConfig tiny_net() {
  NetConfig cfg;
  cfg.depth = 1;
  cfg.width = 16;
  cfg.heads = 2;
  cfg.feature_dim = 4;
  cfg.t_cond = 3;
  cfg.horizon = 6;
  cfg.hist_embed_dim = 4;
  return cfg;
}

TrackSet drifting_tracks(int n, int t, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.2, 0.8);
  std::normal_distribution<double> g(0.0, 0.01);
  TrackSet ts;
  ts.resize(n, t);
  ts.t_cond = 3;
  for (int i = 0; i < n; ++i) {
    double x = u(rng), y = u(rng);
    double vx = g(rng), vy = g(rng);
    for (int s = 0; s < t; ++s) {
      ts.x(i, s) = x + vx * s;
      ts.y(i, s) = y + vy * s;
    }
  }
  return ts;
}

std::vector<TrainExample> tiny_dataset(const NetConfig& net, int clips, uint64_t seed) {
  std::vector<TrainExample> ds;
  for (int k = 0; k < clips; ++k) {
    TrackSet ts = drifting_tracks(4, net.horizon, seed + uint64_t(k));
    Eigen::MatrixXd feats = Eigen::MatrixXd::Constant(4, net.feature_dim, 0.5);
    ds.push_back(prepare_example(ts, feats, net));
  }
  return ds;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("trackforge_train_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("lr schedule: linear warmup then cosine decay to zero") {
  const double base = 1e-3;
  CHECK(lr_at(0, 10, 110, base) == doctest::Approx(0.0));
  CHECK(lr_at(5, 10, 110, base) == doctest::Approx(0.5 * base));
  CHECK(lr_at(10, 10, 110, base) == doctest::Approx(base));
  // Cosine midpoint and endpoint.
  CHECK(lr_at(60, 10, 110, base) == doctest::Approx(0.5 * base));
  CHECK(lr_at(110, 10, 110, base) == doctest::Approx(0.0));
  CHECK(lr_at(200, 10, 110, base) == 0.0);
  // Monotone decrease after warmup.
  for (long s = 10; s < 110; ++s) CHECK(lr_at(s + 1, 10, 110, base) <= lr_at(s, 10, 110, base));
}

TEST_CASE("gradient clipping rescales only above the threshold") {
  NetConfig cfg = tiny_net();
  ModelParams p = init_params(cfg, 1);

  // Construct a global gradient norm of exactly 3 via a single entry.
  p.zero_grad();
  p.w_in.grad(0, 0) = 3.0;
  CHECK(clip_gradients(p, 5.0) == doctest::Approx(3.0));
  CHECK(p.w_in.grad(0, 0) == doctest::Approx(3.0));  // untouched below the cap

  p.zero_grad();
  p.w_in.grad(0, 0) = 4.0;
  p.w_tau.grad(0, 0) = 3.0;  // norm 5, exactly at the cap
  CHECK(clip_gradients(p, 5.0) == doctest::Approx(5.0));
  CHECK(p.w_in.grad(0, 0) == doctest::Approx(4.0));

  p.zero_grad();
  p.w_in.grad(0, 0) = 6.0;
  p.w_tau.grad(0, 0) = 8.0;  // norm 10 -> scaled by 0.5
  CHECK(clip_gradients(p, 5.0) == doctest::Approx(10.0));
  CHECK(p.w_in.grad(0, 0) == doctest::Approx(3.0));
  CHECK(p.w_tau.grad(0, 0) == doctest::Approx(4.0));
}

TEST_CASE("first Adam step matches the closed form") {
  NetConfig cfg = tiny_net();
  ModelParams p = init_params(cfg, 2);
  TrainConfig tc;
  const double g = 0.37;
  double before = p.w_in.value(1, 2);
  p.zero_grad();
  p.w_in.grad(1, 2) = g;
  AdamState st(p);
  adam_step(p, st, tc.lr, tc);
  // Bias correction makes m_hat = g and v_hat = g^2 on step one.
  double expect = before - tc.lr * g / (std::abs(g) + tc.adam_eps);
  CHECK(p.w_in.value(1, 2) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(st.step == 1);
  // Parameters without gradient stay put.
  CHECK(p.w_tau.value(0, 0) == doctest::Approx(init_params(cfg, 2).w_tau.value(0, 0)));
}

TEST_CASE("subsample_to_horizon strides long clips down to the horizon") {
  NetConfig cfg = tiny_net();  // horizon 6
  TrackSet longclip = drifting_tracks(2, 48, 3);
  TrackSet sub = subsample_to_horizon(longclip, cfg);
  CHECK(sub.n == 2);
  CHECK(sub.t == cfg.horizon);
  CHECK(sub.t_cond == cfg.t_cond);
  // Stride 8 fits (48-1)/(6-1) >= 8: frames 0, 8, 16, 24, 32, 40.
  for (int s = 0; s < cfg.horizon; ++s) {
    CHECK(sub.x(0, s) == longclip.x(0, 8 * s));
    CHECK(sub.y(1, s) == longclip.y(1, 8 * s));
  }
  // Exactly horizon-length clips pass through unchanged.
  TrackSet exact = drifting_tracks(2, cfg.horizon, 4);
  TrackSet same = subsample_to_horizon(exact, cfg);
  CHECK(same.positions == exact.positions);
  // Too-short clips are rejected.
  TrackSet shortclip = drifting_tracks(2, cfg.horizon - 1, 5);
  CHECK_THROWS_AS(subsample_to_horizon(shortclip, cfg), DataError);
}

TEST_CASE("prepare_example pads tracks and masks the padding") {
  NetConfig cfg = tiny_net();
  TrackSet ts = drifting_tracks(3, cfg.horizon, 6);
  Eigen::MatrixXd feats = Eigen::MatrixXd::Random(3, cfg.feature_dim);
  TrainExample ex = prepare_example(ts, feats, cfg, 5);
  CHECK(ex.clean.n == 5);
  CHECK(ex.cond.n == 5);
  CHECK(ex.features.rows() == 5);
  REQUIRE(ex.valid.size() == 5);
  CHECK(ex.valid[2] == 1);
  CHECK(ex.valid[3] == 0);
  CHECK(ex.valid[4] == 0);
  // Padded feature rows are zero.
  CHECK(ex.features.row(4).cwiseAbs().maxCoeff() == 0.0);
  TrainExample unpadded = prepare_example(ts, feats, cfg);
  CHECK(unpadded.clean.n == 3);
  CHECK(unpadded.valid == std::vector<uint8_t>(3, 1));
}

TEST_CASE("training is deterministic across identical runs") {
  NetConfig cfg = tiny_net();
  TrainConfig tc;
  tc.total_epochs = 3;
  tc.warmup_epochs = 1;
  tc.batch_size = 4;
  tc.seed = 9;
  auto ds = tiny_dataset(cfg, 10, 77);

  fs::path dir_a = temp_dir("det_a");
  fs::path dir_b = temp_dir("det_b");
  TrainResult ra = train(ds, cfg, tc, dir_a);
  TrainResult rb = train(ds, cfg, tc, dir_b);
  CHECK(ra.final_loss == rb.final_loss);
  CHECK(ra.steps == rb.steps);
  CHECK(file_bytes(dir_a / "loss.csv") == file_bytes(dir_b / "loss.csv"));
  CHECK(file_bytes(ra.last_checkpoint) == file_bytes(rb.last_checkpoint));
  CHECK(fs::exists(ra.best_checkpoint));
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("resume from the state file is bit-exact") {
  NetConfig cfg = tiny_net();
  TrainConfig tc;
  tc.total_epochs = 4;
  tc.warmup_epochs = 1;
  tc.batch_size = 4;
  tc.seed = 10;
  auto ds = tiny_dataset(cfg, 10, 31);

  fs::path dir_full = temp_dir("resume_full");
  TrainResult full = train(ds, cfg, tc, dir_full);

  // Same schedule, interrupted at the epoch-2 boundary, then resumed.
  fs::path dir_split = temp_dir("resume_split");
  TrainConfig first_half = tc;
  first_half.stop_after_epochs = 2;
  train(ds, cfg, first_half, dir_split);
  TrainResult resumed = train(ds, cfg, tc, dir_split, /*resume=*/true);

  CHECK(resumed.final_loss == full.final_loss);
  CHECK(file_bytes(resumed.last_checkpoint) == file_bytes(full.last_checkpoint));
  CHECK(file_bytes(dir_full / "loss.csv") == file_bytes(dir_split / "loss.csv"));
  fs::remove_all(dir_full);
  fs::remove_all(dir_split);
}

TEST_CASE("checkpoint retention keeps the recent window plus the best") {
  NetConfig cfg = tiny_net();
  TrainConfig tc;
  tc.total_epochs = 5;
  tc.warmup_epochs = 1;
  tc.batch_size = 4;
  tc.keep_checkpoints = 2;
  tc.seed = 12;
  auto ds = tiny_dataset(cfg, 8, 13);
  fs::path dir = temp_dir("retain");
  train(ds, cfg, tc, dir);
  CHECK_FALSE(fs::exists(dir / "ckpt_epoch_0001.ckpt"));
  CHECK(fs::exists(dir / "ckpt_epoch_0004.ckpt"));
  CHECK(fs::exists(dir / "ckpt_epoch_0005.ckpt"));
  CHECK(fs::exists(dir / "ckpt_best.ckpt"));
  CHECK(fs::exists(dir / "state.bin"));
  fs::remove_all(dir);
}

TEST_CASE("diverging optimization raises NumericError") {
  NetConfig cfg = tiny_net();
  TrainConfig tc;
  tc.total_epochs = 3;
  tc.warmup_epochs = 0;
  tc.batch_size = 4;
  // Layer norm absorbs ordinary divergence, so push the parameters far
  // enough that attention logits overflow double.
  tc.lr = 1e160;
  tc.clip_norm = 1e300;
  tc.seed = 14;
  auto ds = tiny_dataset(cfg, 8, 15);
  fs::path dir = temp_dir("diverge");
  CHECK_THROWS_AS(train(ds, cfg, tc, dir), NumericError);
  fs::remove_all(dir);
}

TEST_CASE("train config validation") {
  TrainConfig tc;
  CHECK_NOTHROW(tc.validate());
  TrainConfig bad = tc;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tc;
  bad.warmup_epochs = bad.total_epochs + 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tc;
  bad.val_fraction = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
