#pragma once

#include <random>

#include "trackforge/trackset.hpp"

namespace trackforge {

enum class Behavior { walk, graze, idle, turn };

Behavior behavior_from_string(const std::string& s);
std::string behavior_to_string(Behavior b);

// Planar kinematic chain: a rigid torso plus oscillating limb segments.
struct CreatureSpec {
  int n_parts = 5;
  double gait_frequency = 1.5;  // cycles per second
  double gait_amplitude = 0.5;  // radians
  Vec2 body_velocity{0.0, 0.0};  // scene-normalized units per frame
  Behavior behavior = Behavior::walk;
  uint64_t seed = 0;
};

struct SyntheticScene {
  TrackSet tracks;  // camera-free, scene-normalized coordinates
  std::vector<std::array<double, 9>> camera_homographies;  // [T] row-major 3x3
  std::vector<int> part_ids;  // [N]
  uint64_t seed = 0;
};

// Observed pixel-space view of a scene after camera composition.
struct CameraInjection {
  std::vector<double> pixel_tracks;       // [N,T,2] observed (jittered)
  std::vector<double> truth_pixel_tracks; // [N,T,2] noiseless
  std::vector<double> background;         // [B,T,2] observed static points
  std::vector<double> truth_background;   // [B,T,2] noiseless
  int n_background = 0;
  std::vector<std::array<double, 9>> homographies;  // true per-frame H_t
};

constexpr double kScenePixels = 512.0;

SyntheticScene generate_creature(const CreatureSpec& spec, int n_points, int n_frames);

CameraInjection inject_camera(const SyntheticScene& scene, Vec2 pan_px_per_frame,
                              double zoom_rate, double jitter_sigma_px,
                              int n_background = 300);

// Part-identity embedding plus a smooth positional component; unit norm.
std::vector<float> synthetic_feature_provider(const SyntheticScene& scene, int feature_dim);

// Grayscale discs over a textured background, for quality-filter tests only.
std::vector<double> render_rasters(const SyntheticScene& scene, int height, int width);

struct GenConfig {
  int clips = 300;
  uint64_t seed = 0;
  int n_points = 64;
  int n_frames = 32;
  int t_cond = 4;
  double fps = 15.0;
  int feature_dim = 16;
  double scale_v = 12.0;
  double scale_o = 0.1;
  // Stratified low/medium/high motion buckets unless a log-normal speed law
  // is requested instead.
  bool use_lognormal = false;
  double lognormal_mu = -3.0;
  double lognormal_sigma = 0.8;
  std::string buckets_only;  // "", "low", "medium" or "high"
  double max_pan_px = 0.8;
  double max_zoom_rate = 0.004;
  double jitter_sigma_px = 0.3;
};

struct ClipData {
  SyntheticScene scene;
  CameraInjection camera;
  std::vector<float> features;
  std::string bucket;
  double planted_displacement = 0.0;  // log-normal draws only
  Vec2 pan{0, 0};
  double zoom_rate = 0.0;
};

// Motion-bucket measure: mean frame-to-frame step length at 256-px scale.
double mean_step_motion_256(const TrackSet& tracks);
std::string bucket_label(double mean_step_256);

// Deterministic per-clip generation; clip seed is cfg.seed ^ clip_index so
// parallel and serial generation agree bit-exactly.
ClipData generate_clip(const GenConfig& cfg, int clip_index);

}  // namespace trackforge
