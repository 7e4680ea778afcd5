#pragma once

#include <optional>

#include "trackforge/common.hpp"

namespace trackforge {

// N point tracks over T timesteps in bbox-normalized coordinates, with
// per-point per-frame visibility. Occluded entries hold the interpolated
// position as a placeholder; they must never be read as ground truth.
struct TrackSet {
  int n = 0;
  int t = 0;
  int t_cond = 1;
  double fps = 15.0;
  std::vector<double> positions;    // [n][t][2]
  std::vector<uint8_t> visibility;  // [n][t], entries in {0,1}

  double& x(int i, int s) { return positions[size_t(i) * t * 2 + size_t(s) * 2]; }
  double& y(int i, int s) { return positions[size_t(i) * t * 2 + size_t(s) * 2 + 1]; }
  double x(int i, int s) const { return positions[size_t(i) * t * 2 + size_t(s) * 2]; }
  double y(int i, int s) const { return positions[size_t(i) * t * 2 + size_t(s) * 2 + 1]; }
  uint8_t& vis(int i, int s) { return visibility[size_t(i) * t + s]; }
  uint8_t vis(int i, int s) const { return visibility[size_t(i) * t + s]; }

  void resize(int n_, int t_) {
    n = n_;
    t = t_;
    positions.assign(size_t(n) * t * 2, 0.0);
    visibility.assign(size_t(n) * t, 1);
  }

  // Throws DataError on violated invariants (finiteness, 0/1 visibility,
  // 0 < t_cond < t).
  void validate() const;
};

// Scaled velocity + occlusion tensor, the quantity the denoiser predicts.
struct DiffusionTarget {
  int n = 0;
  int t = 0;
  std::vector<double> scaled_velocities;  // [n][t-1][2]
  std::vector<double> scaled_occlusion;   // [n][t]
  double scale_v = 12.0;
  double scale_o = 0.1;

  size_t per_track_dim() const { return size_t(t - 1) * 2 + t; }
  // Flattened per-track target row: velocities first, then occlusion.
  std::vector<double> flatten_track(int i) const;
};

// Per-track history plus the optional global displacement prompt.
struct Conditioning {
  int n = 0;
  int t_cond = 0;
  std::vector<double> history_velocities;  // [n][t_cond-1][2]
  std::vector<double> history_visibility;  // [n][t_cond]
  std::vector<double> start_points;        // [n][2], locations at the first frame
  bool history_present = true;
  bool has_displacement = false;
  Vec2 displacement{0.0, 0.0};
};

struct BBox {
  double x0, y0, x1, y1;
};

// Affine map of the margin-expanded bbox onto [0,1]^2. Points outside the
// box are kept (they simply land outside [0,1]).
std::vector<double> normalize_to_bbox(const std::vector<double>& raw_points, int n, int t,
                                      const BBox& bbox, double margin_fraction);
std::vector<double> denormalize_from_bbox(const std::vector<double>& norm_points, int n, int t,
                                          const BBox& bbox, double margin_fraction);

// Per-step velocities with interpolation across occlusion gaps:
// v_s = (x_i - x_j)/(i - j) for the nearest visible frames j <= s < s+1 <= i,
// and 0 when either endpoint is missing (leading/trailing occlusion).
std::vector<double> velocities_from_positions(const TrackSet& tracks);

// Cumulative sum, the exact inverse of the above on fully visible tracks.
std::vector<double> positions_from_velocities(const std::vector<double>& start, int n,
                                              const std::vector<double>& velocities, int t);

// Mean of (final - first) position over tracks visible at the final frame;
// absent when no track is visible there.
std::optional<Vec2> displacement_conditioning(const TrackSet& tracks);

DiffusionTarget encode_target(const TrackSet& tracks, double scale_v, double scale_o);
TrackSet decode_target(const DiffusionTarget& target, const std::vector<double>& start_points,
                       int t_cond = 1, double fps = 15.0);

// First t_cond frames of a track set as conditioning (history velocities use
// the same gap-interpolation rule, restricted to the history window).
Conditioning make_conditioning(const TrackSet& tracks);

}  // namespace trackforge
