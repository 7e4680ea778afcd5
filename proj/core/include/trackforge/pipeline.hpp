#pragma once

#include <functional>
#include <random>

#include "trackforge/common.hpp"

namespace trackforge {

struct QualityReport {
  double fps = 0.0;
  long pixel_count = 0;
  double dynamic_range = 0.0;  // mean over frames of (P99 - P1)/(Imax - Imin)
  bool accepted = false;
};

// Percentile with linear interpolation between closest ranks, q in [0,100].
double percentile(std::vector<double> values, double q);

// Grayscale intensity frames [T,H,W]; dtype_range is the theoretical
// (min, max) for the source data type, e.g. (0, 255).
QualityReport dynamic_range_filter(const std::vector<double>& frames, int t, int h, int w,
                                   double fps, std::pair<double, double> dtype_range);

// Greedy 100-frame windows; a window's first frame with fewer than 3 of 50
// query points visible is a boundary and the next window restarts there.
using VisibilityFn = std::function<std::vector<int>(int start, int length)>;
std::vector<int> detect_shots(const VisibilityFn& visibility_fn, int total_frames);

struct Detection {
  double x0, y0, x1, y1;
  double confidence;
};

struct QueryFrameResult {
  int frame = -1;
  bool exact_count_pool = true;  // false when the fallback (nearest count) was used
};

double iou(const Detection& a, const Detection& b);
QueryFrameResult select_query_frame(const std::vector<std::vector<Detection>>& detections);
// Shots longer than 1000 frames are handled in 1000-frame partitions.
std::vector<QueryFrameResult> partitioned_query_frames(
    const std::vector<std::vector<Detection>>& detections);

struct SamplingWeights {
  std::vector<double> probabilities;  // over mask pixels, sums to 1
  std::vector<std::pair<int, int>> pixels;  // (x, y) per probability entry
  double epsilon_dt = 1e-6;
  double dt_fraction = 0.75;
  double uniform_fraction = 0.25;
};

// Exact squared Euclidean distance transform (distance to the nearest
// background pixel; the image border counts as background).
std::vector<double> distance_transform(const std::vector<uint8_t>& mask, int h, int w);

SamplingWeights sampling_weights(const std::vector<uint8_t>& mask, int h, int w);

struct QueryPoint {
  int x, y, frame;
};
std::vector<QueryPoint> sample_query_points(const SamplingWeights& weights, int n, int n_frames,
                                            std::mt19937_64& rng);

}  // namespace trackforge
