#pragma once

#include <filesystem>

#include "trackforge/trackset.hpp"

namespace trackforge {

struct Histogram {
  std::vector<double> bin_centers;  // centers in log space
  std::vector<long> counts;
};

struct MotionStats {
  int n_clips = 0;
  int n_zero = 0;  // clips excluded from log fits (zero displacement)
  Histogram magnitude, dx, dy;
  double lognormal_mu = 0.0;
  double lognormal_sigma = 0.0;
  double powerlaw_exponent = 0.0;
  double powerlaw_intercept = 0.0;
  double r2_lognormal = 0.0;
  double r2_powerlaw = 0.0;
  bool degenerate = false;  // sigma ~ 0, fits undefined
  std::vector<double> displacements;  // per-clip mean displacement
};

// Per-clip mean distance between start and end for points visible at both.
double clip_mean_displacement(const TrackSet& tracks);

MotionStats motion_statistics(const std::vector<double>& clip_displacements, int n_bins = 24);

void write_stats_csv(const std::filesystem::path& path, const MotionStats& stats);
void write_stats_svg(const std::filesystem::path& path, const MotionStats& stats);

}  // namespace trackforge
