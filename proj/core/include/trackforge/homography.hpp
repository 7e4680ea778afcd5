#pragma once

#include <random>

#include "trackforge/common.hpp"

namespace trackforge {

using Homography = std::array<double, 9>;  // row-major 3x3

Vec2 apply_homography(const Homography& h, const Vec2& p);
Homography invert_homography(const Homography& h);
Homography compose(const Homography& a, const Homography& b);  // a * b
// Scale so that h[8] == 1 (throws NumericError when h[8] ~ 0).
Homography normalize_homography(const Homography& h);
double condition_number(const Homography& h);

// Normalized DLT least-squares fit, >= 4 correspondences src -> dst.
Homography estimate_homography_dlt(const std::vector<Vec2>& src, const std::vector<Vec2>& dst);

struct RansacParams {
  double inlier_threshold_px = 2.0;
  int iterations = 500;
  int refinement_passes = 2;
};

struct RansacResult {
  Homography h{1, 0, 0, 0, 1, 0, 0, 0, 1};
  double inlier_ratio = 0.0;
  bool valid = false;
};

RansacResult ransac_homography(const std::vector<Vec2>& src, const std::vector<Vec2>& dst,
                               const RansacParams& params, std::mt19937_64& rng);

// Per-frame homographies mapping the canonical middle reference frame to
// each frame t: a point in frame t' is expressed in anchor frame t via
// H_t * H_{t'}^{-1}.
struct HomographySeq {
  std::vector<Homography> matrices;  // [T]
  int reference_index = 0;
  std::vector<double> inlier_ratios;  // [T]
  bool valid = false;
};

HomographySeq estimate_stabilization(const std::vector<double>& background_tracks, int b, int t,
                                     const std::vector<uint8_t>& visibility,
                                     const RansacParams& params = {}, uint64_t seed = 0);

struct StabilizedTracks {
  std::vector<double> positions;  // [N,T,2] in the anchor frame
  std::vector<uint8_t> point_valid;  // [N,T], 0 where homogeneous w ~ 0
};

StabilizedTracks stabilize_tracks(const std::vector<double>& pixel_tracks, int n, int t,
                                  const HomographySeq& homographies, int anchor_frame);

}  // namespace trackforge
