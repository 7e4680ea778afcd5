#include "trackforge/synthkin.hpp"

#include <algorithm>
#include <cmath>

namespace trackforge {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kTorsoLen = 0.18;
constexpr double kLimbLen = 0.10;
}  // namespace

Behavior behavior_from_string(const std::string& s) {
  if (s == "walk") return Behavior::walk;
  if (s == "graze") return Behavior::graze;
  if (s == "idle") return Behavior::idle;
  if (s == "turn") return Behavior::turn;
  throw ConfigError("unknown behavior: " + s);
}

std::string behavior_to_string(Behavior b) {
  switch (b) {
    case Behavior::walk: return "walk";
    case Behavior::graze: return "graze";
    case Behavior::idle: return "idle";
    case Behavior::turn: return "turn";
  }
  return "?";
}

SyntheticScene generate_creature(const CreatureSpec& spec, int n_points, int n_frames) {
  if (n_points < 32) throw ConfigError("generate_creature: n_points below minimum of 32");
  if (n_frames < 8) throw ConfigError("generate_creature: n_frames must be >= 8");
  if (spec.gait_frequency < 0) throw ConfigError("generate_creature: negative gait frequency");
  double vmag = std::hypot(spec.body_velocity[0], spec.body_velocity[1]);
  if (spec.behavior == Behavior::idle && vmag >= 1e-3)
    throw ConfigError("generate_creature: idle requires near-zero body velocity");

  std::mt19937_64 rng(splitmix64(spec.seed));
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  SyntheticScene scene;
  scene.seed = spec.seed;
  scene.tracks.resize(n_points, n_frames);
  scene.tracks.fps = 15.0;
  scene.part_ids.resize(n_points);
  scene.camera_homographies.assign(n_frames, {1, 0, 0, 0, 1, 0, 0, 0, 1});

  int n_parts = std::max(1, spec.n_parts);
  // Per-point static layout: part, fraction along the segment, lateral offset.
  std::vector<double> frac(n_points), lateral(n_points);
  for (int i = 0; i < n_points; ++i) {
    scene.part_ids[i] = i % n_parts;
    frac[i] = uni(rng);
    lateral[i] = (uni(rng) - 0.5) * 0.02;
  }
  // Limb anchors along the torso, alternating front/back limbs.
  std::vector<double> anchor_frac(n_parts, 0.5);
  std::vector<double> limb_phase(n_parts, 0.0);
  for (int p = 1; p < n_parts; ++p) {
    anchor_frac[p] = double(p - 1) / std::max(1, n_parts - 2 > 0 ? n_parts - 2 : 1);
    limb_phase[p] = (p % 2 == 0) ? kPi : 0.0;
  }

  // Start the torso so the walk stays inside the scene.
  double start_x = 0.3 - 0.5 * spec.body_velocity[0] * 0.0;
  double start_y = 0.5;
  if (spec.body_velocity[0] < 0) start_x = 0.7;
  if (spec.body_velocity[1] > 0.002) start_y = 0.35;
  if (spec.body_velocity[1] < -0.002) start_y = 0.65;

  double turn_rate = (spec.behavior == Behavior::turn) ? (kPi / n_frames) : 0.0;

  double cx = start_x, cy = start_y;
  for (int s = 0; s < n_frames; ++s) {
    double phase = 2.0 * kPi * spec.gait_frequency * s / scene.tracks.fps;
    for (int i = 0; i < n_points; ++i) {
      int p = scene.part_ids[i];
      double px, py;
      if (p == 0) {
        px = cx + (frac[i] - 0.5) * kTorsoLen;
        py = cy + lateral[i];
      } else {
        double ax = cx + (anchor_frac[p] - 0.5) * kTorsoLen;
        double ay = cy;
        double theta = kPi / 2.0 + spec.gait_amplitude * std::sin(phase + limb_phase[p]);
        px = ax + frac[i] * kLimbLen * std::cos(theta) + lateral[i];
        py = ay + frac[i] * kLimbLen * std::sin(theta);
      }
      scene.tracks.x(i, s) = px;
      scene.tracks.y(i, s) = py;
      // Back limbs (even limb index >= 2) self-occlude during half of each
      // gait cycle; the first frame always stays visible.
      bool occluded = false;
      if (p >= 2 && p % 2 == 0 && s > 0 && spec.gait_amplitude > 0 && spec.gait_frequency > 0)
        occluded = std::sin(phase + limb_phase[p]) < -0.1;
      scene.tracks.vis(i, s) = occluded ? 0 : 1;
    }
    double vx = spec.body_velocity[0], vy = spec.body_velocity[1];
    if (turn_rate != 0.0) {
      double ang = turn_rate * s;
      double rx = vx * std::cos(ang) - vy * std::sin(ang);
      double ry = vx * std::sin(ang) + vy * std::cos(ang);
      vx = rx;
      vy = ry;
    }
    cx += vx;
    cy += vy;
  }
  // Occluded placeholders hold the interpolated position so accidental reads
  // stay bounded.
  std::vector<double> vel = velocities_from_positions(scene.tracks);
  std::vector<double> starts(size_t(n_points) * 2);
  for (int i = 0; i < n_points; ++i) {
    starts[size_t(i) * 2] = scene.tracks.x(i, 0);
    starts[size_t(i) * 2 + 1] = scene.tracks.y(i, 0);
  }
  std::vector<double> interp = positions_from_velocities(starts, n_points, vel, n_frames);
  for (int i = 0; i < n_points; ++i)
    for (int s = 0; s < n_frames; ++s)
      if (!scene.tracks.vis(i, s)) {
        scene.tracks.x(i, s) = interp[size_t(i) * n_frames * 2 + size_t(s) * 2];
        scene.tracks.y(i, s) = interp[size_t(i) * n_frames * 2 + size_t(s) * 2 + 1];
      }
  return scene;
}

namespace {

inline void apply_h(const std::array<double, 9>& h, double x, double y, double& ox, double& oy) {
  double w = h[6] * x + h[7] * y + h[8];
  ox = (h[0] * x + h[1] * y + h[2]) / w;
  oy = (h[3] * x + h[4] * y + h[5]) / w;
}

}  // namespace

CameraInjection inject_camera(const SyntheticScene& scene, Vec2 pan, double zoom_rate,
                              double jitter_sigma, int n_background) {
  const TrackSet& ts = scene.tracks;
  int n = ts.n, t = ts.t;
  CameraInjection out;
  out.n_background = n_background;
  out.homographies.resize(t);
  const double c = kScenePixels / 2.0;
  for (int s = 0; s < t; ++s) {
    double sc = std::pow(1.0 + zoom_rate, s);
    if (sc < 0.5 || sc > 2.0) throw ConfigError("inject_camera: zoom leaves [0.5, 2] range");
    double tx = c - sc * c + pan[0] * s;
    double ty = c - sc * c + pan[1] * s;
    out.homographies[s] = {sc, 0, tx, 0, sc, ty, 0, 0, 1};
  }

  std::mt19937_64 rng(splitmix64(scene.seed ^ 0xB0C0DE));
  std::uniform_real_distribution<double> uni(0.0, kScenePixels);
  std::normal_distribution<double> gauss(0.0, 1.0);

  out.truth_background.resize(size_t(n_background) * t * 2);
  std::vector<double> bg_static(size_t(n_background) * 2);
  for (int b = 0; b < n_background; ++b) {
    bg_static[size_t(b) * 2] = uni(rng);
    bg_static[size_t(b) * 2 + 1] = uni(rng);
  }

  out.truth_pixel_tracks.resize(size_t(n) * t * 2);
  for (int i = 0; i < n; ++i)
    for (int s = 0; s < t; ++s) {
      double ox, oy;
      apply_h(out.homographies[s], ts.x(i, s) * kScenePixels, ts.y(i, s) * kScenePixels, ox, oy);
      out.truth_pixel_tracks[size_t(i) * t * 2 + size_t(s) * 2] = ox;
      out.truth_pixel_tracks[size_t(i) * t * 2 + size_t(s) * 2 + 1] = oy;
    }
  for (int b = 0; b < n_background; ++b)
    for (int s = 0; s < t; ++s) {
      double ox, oy;
      apply_h(out.homographies[s], bg_static[size_t(b) * 2], bg_static[size_t(b) * 2 + 1], ox, oy);
      out.truth_background[size_t(b) * t * 2 + size_t(s) * 2] = ox;
      out.truth_background[size_t(b) * t * 2 + size_t(s) * 2 + 1] = oy;
    }

  out.pixel_tracks = out.truth_pixel_tracks;
  out.background = out.truth_background;
  if (jitter_sigma > 0) {
    for (double& v : out.pixel_tracks) v += jitter_sigma * gauss(rng);
    for (double& v : out.background) v += jitter_sigma * gauss(rng);
  }
  return out;
}

std::vector<float> synthetic_feature_provider(const SyntheticScene& scene, int feature_dim) {
  if (feature_dim < 8) throw ConfigError("synthetic_feature_provider: feature_dim must be >= 8");
  int n_parts = 1 + *std::max_element(scene.part_ids.begin(), scene.part_ids.end());
  std::mt19937_64 rng(splitmix64(scene.seed ^ 0xFEA7));
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Orthonormal part basis (Gram-Schmidt over Gaussian draws).
  std::vector<std::vector<double>> basis(n_parts, std::vector<double>(feature_dim));
  for (int p = 0; p < n_parts; ++p) {
    auto& e = basis[p];
    for (double& v : e) v = gauss(rng);
    for (int q = 0; q < p; ++q) {
      double dot = 0;
      for (int k = 0; k < feature_dim; ++k) dot += e[k] * basis[q][k];
      for (int k = 0; k < feature_dim; ++k) e[k] -= dot * basis[q][k];
    }
    double norm = 0;
    for (double v : e) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : e) v /= norm;
  }

  int n = int(scene.part_ids.size());
  std::vector<float> feats(size_t(n) * feature_dim);
  for (int i = 0; i < n; ++i) {
    const auto& e = basis[scene.part_ids[i]];
    // Smooth positional component from the point's start location.
    double px = scene.tracks.x(i, 0), py = scene.tracks.y(i, 0);
    std::vector<double> f(feature_dim);
    double norm = 0;
    for (int k = 0; k < feature_dim; ++k) {
      double pos = std::sin((k + 1) * 3.1 * px + k * 1.7) + std::cos((k + 2) * 2.3 * py);
      f[k] = e[k] + 0.12 * pos / std::sqrt(double(feature_dim));
      norm += f[k] * f[k];
    }
    norm = std::sqrt(norm);
    for (int k = 0; k < feature_dim; ++k) feats[size_t(i) * feature_dim + k] = float(f[k] / norm);
  }
  return feats;
}

std::vector<double> render_rasters(const SyntheticScene& scene, int height, int width) {
  int t = scene.tracks.t;
  std::vector<double> frames(size_t(t) * height * width);
  for (int s = 0; s < t; ++s) {
    double* img = &frames[size_t(s) * height * width];
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        img[size_t(y) * width + x] =
            128.0 + 80.0 * std::sin(0.13 * x) * std::cos(0.11 * y) + 30.0 * std::sin(0.031 * (x + y));
    for (int i = 0; i < scene.tracks.n; ++i) {
      if (!scene.tracks.vis(i, s)) continue;
      int cx = int(scene.tracks.x(i, s) * width);
      int cy = int(scene.tracks.y(i, s) * height);
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
          int px = cx + dx, py = cy + dy;
          if (px < 0 || py < 0 || px >= width || py >= height) continue;
          if (dx * dx + dy * dy <= 4)
            img[size_t(py) * width + px] = 20.0 + 10.0 * (scene.part_ids[i] % 5);
        }
    }
    for (size_t k = 0; k < size_t(height) * width; ++k)
      img[k] = std::clamp(img[k], 0.0, 255.0);
  }
  return frames;
}

double mean_step_motion_256(const TrackSet& tracks) {
  double sum = 0;
  long count = 0;
  for (int i = 0; i < tracks.n; ++i)
    for (int s = 0; s + 1 < tracks.t; ++s) {
      if (!tracks.vis(i, s) || !tracks.vis(i, s + 1)) continue;
      double dx = tracks.x(i, s + 1) - tracks.x(i, s);
      double dy = tracks.y(i, s + 1) - tracks.y(i, s);
      sum += std::hypot(dx, dy) * 256.0;
      ++count;
    }
  return count ? sum / count : 0.0;
}

std::string bucket_label(double m) {
  if (m < 0.5) return "low";
  if (m <= 1.5) return "medium";
  return "high";
}

namespace {

CreatureSpec draw_spec(const GenConfig& cfg, std::mt19937_64& rng, const std::string& bucket) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  CreatureSpec spec;
  spec.n_parts = 5;
  spec.gait_frequency = 1.0 + uni(rng);

  double speed;  // scene-normalized units per frame
  if (cfg.use_lognormal) {
    std::normal_distribution<double> g(cfg.lognormal_mu, cfg.lognormal_sigma);
    double disp = std::exp(g(rng));
    speed = disp / double(cfg.n_frames - 1);
    spec.behavior = Behavior::walk;
    // Keep the gait's net start-to-end contribution small relative to the
    // planted displacement so the log-normal law survives measurement.
    spec.gait_amplitude = std::min(0.5, 0.15 * disp / kLimbLen);
  } else if (bucket == "low") {
    spec.behavior = uni(rng) < 0.5 ? Behavior::idle : Behavior::graze;
    speed = (spec.behavior == Behavior::idle) ? 0.0 : (0.0002 + 0.0008 * uni(rng));
    spec.gait_amplitude = (spec.behavior == Behavior::idle) ? 0.0 : 0.02 + 0.03 * uni(rng);
    spec.gait_frequency = (spec.behavior == Behavior::idle) ? 0.0 : spec.gait_frequency;
  } else if (bucket == "medium") {
    spec.behavior = uni(rng) < 0.6 ? Behavior::walk : Behavior::graze;
    speed = 0.0025 + 0.002 * uni(rng);
    spec.gait_amplitude = 0.08 + 0.08 * uni(rng);
  } else {
    spec.behavior = uni(rng) < 0.7 ? Behavior::walk : Behavior::turn;
    speed = 0.007 + 0.008 * uni(rng);
    spec.gait_amplitude = 0.25 + 0.2 * uni(rng);
  }
  double ang = cfg.use_lognormal ? (2.0 * kPi * uni(rng))
                                 : (uni(rng) < 0.7 ? (uni(rng) < 0.5 ? 0.0 : kPi)
                                                   : 2.0 * kPi * uni(rng));
  spec.body_velocity = {speed * std::cos(ang), speed * std::sin(ang)};
  return spec;
}

}  // namespace

ClipData generate_clip(const GenConfig& cfg, int clip_index) {
  uint64_t clip_seed = cfg.seed ^ uint64_t(clip_index);
  std::mt19937_64 rng(splitmix64(clip_seed ^ 0x5EED));
  std::uniform_real_distribution<double> uni(-1.0, 1.0);

  std::string target_bucket;
  if (!cfg.use_lognormal) {
    if (!cfg.buckets_only.empty()) {
      target_bucket = cfg.buckets_only;
    } else {
      const char* names[3] = {"low", "medium", "high"};
      target_bucket = names[clip_index % 3];
    }
  }

  ClipData clip;
  for (int attempt = 0; attempt < 32; ++attempt) {
    CreatureSpec spec = draw_spec(cfg, rng, target_bucket);
    spec.seed = splitmix64(clip_seed) ^ uint64_t(attempt);
    SyntheticScene scene = generate_creature(spec, cfg.n_points, cfg.n_frames);
    scene.tracks.t_cond = cfg.t_cond;
    scene.tracks.fps = cfg.fps;
    std::string measured = bucket_label(mean_step_motion_256(scene.tracks));
    if (!cfg.use_lognormal && measured != target_bucket && attempt + 1 < 32) continue;
    clip.scene = std::move(scene);
    clip.bucket = cfg.use_lognormal ? measured : target_bucket;
    if (cfg.use_lognormal) {
      double mag = std::hypot(spec.body_velocity[0], spec.body_velocity[1]);
      clip.planted_displacement = mag * (cfg.n_frames - 1);
    }
    break;
  }
  clip.pan = {uni(rng) * cfg.max_pan_px, uni(rng) * cfg.max_pan_px};
  clip.zoom_rate = uni(rng) * cfg.max_zoom_rate;
  clip.camera = inject_camera(clip.scene, clip.pan, clip.zoom_rate, cfg.jitter_sigma_px);
  clip.features = synthetic_feature_provider(clip.scene, cfg.feature_dim);
  return clip;
}

}  // namespace trackforge
