#include <cmath>
#include <set>

#include "doctest.h"
#include "trackforge/homography.hpp"
#include "trackforge/synthkin.hpp"

using namespace trackforge;

TEST_CASE("behavior names round-trip") {
  for (Behavior b : {Behavior::walk, Behavior::graze, Behavior::idle, Behavior::turn})
    CHECK(behavior_from_string(behavior_to_string(b)) == b);
  CHECK_THROWS_AS(behavior_from_string("teleport"), ConfigError);
}

TEST_CASE("generate_creature produces valid deterministic scenes") {
  CreatureSpec spec;
  spec.body_velocity = {0.004, 0.0};
  spec.seed = 12;
  SyntheticScene a = generate_creature(spec, 48, 24);
  SyntheticScene b = generate_creature(spec, 48, 24);
  CHECK(a.tracks.positions == b.tracks.positions);
  CHECK(a.tracks.visibility == b.tracks.visibility);
  a.tracks.t_cond = 4;
  CHECK_NOTHROW(a.tracks.validate());
  CHECK(a.part_ids.size() == 48);
  CHECK(a.camera_homographies.size() == 24);
  // Every configured part contributes points.
  std::set<int> parts(a.part_ids.begin(), a.part_ids.end());
  CHECK(int(parts.size()) == spec.n_parts);
  // All parts start visible.
  for (int i = 0; i < a.tracks.n; ++i) CHECK(a.tracks.vis(i, 0) == 1);

  spec.seed = 13;
  SyntheticScene c = generate_creature(spec, 48, 24);
  CHECK(a.tracks.positions != c.tracks.positions);
}

TEST_CASE("generate_creature rejects bad specs") {
  CreatureSpec spec;
  CHECK_THROWS_AS(generate_creature(spec, 8, 24), ConfigError);
  CHECK_THROWS_AS(generate_creature(spec, 48, 4), ConfigError);
  spec.behavior = Behavior::idle;
  spec.body_velocity = {0.01, 0.0};
  CHECK_THROWS_AS(generate_creature(spec, 48, 24), ConfigError);
}

TEST_CASE("walking moves the body, idling does not") {
  CreatureSpec walk;
  walk.body_velocity = {0.008, 0.0};
  SyntheticScene moving = generate_creature(walk, 48, 24);
  CreatureSpec idle;
  idle.behavior = Behavior::idle;
  idle.gait_amplitude = 0.0;
  idle.gait_frequency = 0.0;
  SyntheticScene still = generate_creature(idle, 48, 24);
  CHECK(mean_step_motion_256(moving.tracks) > 10.0 * mean_step_motion_256(still.tracks));
}

TEST_CASE("camera injection composes the planted homographies exactly") {
  CreatureSpec spec;
  spec.body_velocity = {0.003, 0.001};
  SyntheticScene scene = generate_creature(spec, 48, 16);
  CameraInjection cam = inject_camera(scene, {0.5, -0.3}, 0.002, 0.0, 50);
  REQUIRE(cam.homographies.size() == 16);
  CHECK(cam.n_background == 50);
  CHECK(cam.background.size() == size_t(50) * 16 * 2);
  // Zero jitter: observed equals truth.
  CHECK(cam.pixel_tracks == cam.truth_pixel_tracks);
  CHECK(cam.background == cam.truth_background);
  // Truth tracks are the scene points pushed through H_t at pixel scale.
  for (int s = 0; s < 16; ++s)
    for (int i = 0; i < scene.tracks.n; i += 7) {
      Vec2 scene_px{scene.tracks.x(i, s) * kScenePixels, scene.tracks.y(i, s) * kScenePixels};
      Vec2 expect = apply_homography(cam.homographies[size_t(s)], scene_px);
      CHECK(cam.truth_pixel_tracks[size_t(i) * 16 * 2 + size_t(s) * 2] ==
            doctest::Approx(expect[0]).epsilon(1e-9));
      CHECK(cam.truth_pixel_tracks[size_t(i) * 16 * 2 + size_t(s) * 2 + 1] ==
            doctest::Approx(expect[1]).epsilon(1e-9));
    }

  CameraInjection noisy = inject_camera(scene, {0.5, -0.3}, 0.002, 0.4, 50);
  CHECK(noisy.pixel_tracks != noisy.truth_pixel_tracks);
  CHECK_THROWS_AS(inject_camera(scene, {0, 0}, 0.2, 0.0, 50), ConfigError);
}

TEST_CASE("feature provider emits unit-norm per-point features") {
  CreatureSpec spec;
  SyntheticScene scene = generate_creature(spec, 48, 16);
  auto feats = synthetic_feature_provider(scene, 16);
  REQUIRE(feats.size() == size_t(48) * 16);
  for (int i = 0; i < 48; ++i) {
    double sq = 0.0;
    for (int c = 0; c < 16; ++c) sq += double(feats[size_t(i) * 16 + c]) * feats[size_t(i) * 16 + c];
    CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-5));
  }
  // Same part, similar layout -> correlated features across points of a part.
  CHECK_THROWS_AS(synthetic_feature_provider(scene, 4), ConfigError);
}

TEST_CASE("bucket labelling and edges") {
  CHECK(bucket_label(0.1) == "low");
  CHECK(bucket_label(0.49) == "low");
  CHECK(bucket_label(0.5) == "medium");
  CHECK(bucket_label(1.5) == "medium");
  CHECK(bucket_label(1.51) == "high");
}

TEST_CASE("mean_step_motion_256 counts only consecutive visible pairs") {
  TrackSet ts;
  ts.resize(1, 3);
  ts.x(0, 1) = 1.0 / 256.0;
  ts.x(0, 2) = 3.0 / 256.0;
  CHECK(mean_step_motion_256(ts) == doctest::Approx(1.5));
  ts.vis(0, 1) = 0;  // both adjacent pairs drop out
  CHECK(mean_step_motion_256(ts) == doctest::Approx(0.0));
}

TEST_CASE("generate_clip is deterministic and respects bucket targets") {
  GenConfig cfg;
  cfg.seed = 2024;
  cfg.n_points = 48;
  cfg.n_frames = 24;
  ClipData a = generate_clip(cfg, 4);
  ClipData b = generate_clip(cfg, 4);
  CHECK(a.scene.tracks.positions == b.scene.tracks.positions);
  CHECK(a.camera.pixel_tracks == b.camera.pixel_tracks);
  CHECK(a.features == b.features);
  CHECK(a.bucket == b.bucket);

  // Stratification cycles low/medium/high by index.
  CHECK(generate_clip(cfg, 0).bucket == "low");
  CHECK(generate_clip(cfg, 1).bucket == "medium");
  CHECK(generate_clip(cfg, 2).bucket == "high");

  GenConfig only_high = cfg;
  only_high.buckets_only = "high";
  for (int k = 0; k < 3; ++k) {
    ClipData clip = generate_clip(only_high, k);
    CHECK(clip.bucket == "high");
    CHECK(bucket_label(mean_step_motion_256(clip.scene.tracks)) == "high");
  }
}

TEST_CASE("log-normal mode plants a displacement law") {
  GenConfig cfg;
  cfg.seed = 5;
  cfg.use_lognormal = true;
  cfg.n_points = 48;
  cfg.n_frames = 24;
  double sum_log = 0.0;
  const int n = 40;
  for (int k = 0; k < n; ++k) {
    ClipData clip = generate_clip(cfg, k);
    REQUIRE(clip.planted_displacement > 0.0);
    sum_log += std::log(clip.planted_displacement);
  }
  // Sample mean of log displacement near mu = -3 (sigma 0.8, n = 40).
  CHECK(std::abs(sum_log / n - cfg.lognormal_mu) < 3.0 * 0.8 / std::sqrt(double(n)));
}

TEST_CASE("rendered rasters stay in range and mark creature points") {
  CreatureSpec spec;
  SyntheticScene scene = generate_creature(spec, 48, 8);
  const int dim = 64;
  auto frames = render_rasters(scene, dim, dim);
  REQUIRE(frames.size() == size_t(8) * dim * dim);
  for (double v : frames) {
    CHECK(v >= 0.0);
    CHECK(v <= 255.0);
  }
}
