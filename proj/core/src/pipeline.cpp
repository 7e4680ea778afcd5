#include "trackforge/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace trackforge {

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("percentile: empty input");
  std::sort(values.begin(), values.end());
  double rank = q / 100.0 * double(values.size() - 1);
  size_t lo = size_t(std::floor(rank));
  size_t hi = size_t(std::ceil(rank));
  double frac = rank - double(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

QualityReport dynamic_range_filter(const std::vector<double>& frames, int t, int h, int w,
                                   double fps, std::pair<double, double> dtype_range) {
  if (t < 1 || h < 1 || w < 1 || frames.size() != size_t(t) * h * w)
    throw DataError("dynamic_range_filter: empty or mismatched frames");
  double span = dtype_range.second - dtype_range.first;
  if (span <= 0) throw ConfigError("dynamic_range_filter: invalid dtype range");
  double sum = 0.0;
  std::vector<double> frame(size_t(h) * w);
  for (int s = 0; s < t; ++s) {
    std::copy_n(frames.begin() + size_t(s) * h * w, size_t(h) * w, frame.begin());
    double p99 = percentile(frame, 99.0);
    double p1 = percentile(frame, 1.0);
    sum += (p99 - p1) / span;
  }
  QualityReport rep;
  rep.fps = fps;
  rep.pixel_count = long(h) * w;
  rep.dynamic_range = sum / t;
  rep.accepted = fps >= 29.9 && rep.pixel_count >= 200000 && rep.dynamic_range >= 0.55;
  return rep;
}

std::vector<int> detect_shots(const VisibilityFn& visibility_fn, int total_frames) {
  std::vector<int> boundaries;
  int pos = 0;
  while (pos < total_frames) {
    int len = std::min(100, total_frames - pos);
    std::vector<int> counts = visibility_fn(pos, len);
    if (int(counts.size()) != len) throw DataError("detect_shots: bad visibility count window");
    int boundary = -1;
    // Frame 0 of a window is where queries were sampled; a boundary there
    // would re-trigger forever, so scanning starts at 1.
    for (int k = 1; k < len; ++k) {
      if (counts[k] < 3) {  // < 6% of 50 points
        boundary = pos + k;
        break;
      }
    }
    if (boundary >= 0) {
      boundaries.push_back(boundary);
      pos = boundary;
    } else {
      pos += len;
    }
  }
  return boundaries;
}

double iou(const Detection& a, const Detection& b) {
  double ix0 = std::max(a.x0, b.x0), iy0 = std::max(a.y0, b.y0);
  double ix1 = std::min(a.x1, b.x1), iy1 = std::min(a.y1, b.y1);
  double iw = std::max(0.0, ix1 - ix0), ih = std::max(0.0, iy1 - iy0);
  double inter = iw * ih;
  double area_a = std::max(0.0, a.x1 - a.x0) * std::max(0.0, a.y1 - a.y0);
  double area_b = std::max(0.0, b.x1 - b.x0) * std::max(0.0, b.y1 - b.y0);
  double uni = area_a + area_b - inter;
  return uni > 0 ? inter / uni : 0.0;
}

QueryFrameResult select_query_frame(const std::vector<std::vector<Detection>>& detections) {
  long total = 0;
  bool any = false;
  for (const auto& f : detections) {
    total += long(f.size());
    if (!f.empty()) any = true;
  }
  if (!any) throw DataError("select_query_frame: no detections in any frame");
  int target = int(std::lround(double(total) / double(detections.size())));

  QueryFrameResult result;
  std::vector<int> pool;
  for (int f = 0; f < int(detections.size()); ++f)
    if (int(detections[f].size()) == target) pool.push_back(f);
  if (pool.empty()) {
    // Fallback: frames whose count is nearest the target.
    result.exact_count_pool = false;
    int best_gap = std::numeric_limits<int>::max();
    for (const auto& f : detections)
      if (!f.empty()) best_gap = std::min(best_gap, std::abs(int(f.size()) - target));
    for (int f = 0; f < int(detections.size()); ++f)
      if (!detections[f].empty() && std::abs(int(detections[f].size()) - target) == best_gap)
        pool.push_back(f);
  }

  // Mean pairwise IoU, defined 0 for frames with a single box.
  std::vector<std::pair<double, int>> scored;
  for (int f : pool) {
    const auto& boxes = detections[f];
    double mean_iou = 0.0;
    if (boxes.size() >= 2) {
      double s = 0.0;
      long pairs = 0;
      for (size_t i = 0; i < boxes.size(); ++i)
        for (size_t j = i + 1; j < boxes.size(); ++j) {
          s += iou(boxes[i], boxes[j]);
          ++pairs;
        }
      mean_iou = s / double(pairs);
    }
    scored.emplace_back(mean_iou, f);
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  size_t keep = std::max<size_t>(1, size_t(std::ceil(0.1 * double(scored.size()))));

  double best_conf = -1.0;
  for (size_t k = 0; k < keep; ++k) {
    int f = scored[k].second;
    double conf = 0.0;
    for (const auto& d : detections[f]) conf += d.confidence;
    if (!detections[f].empty()) conf /= double(detections[f].size());
    if (conf > best_conf) {
      best_conf = conf;
      result.frame = f;
    }
  }
  return result;
}

std::vector<QueryFrameResult> partitioned_query_frames(
    const std::vector<std::vector<Detection>>& detections) {
  std::vector<QueryFrameResult> out;
  for (size_t start = 0; start < detections.size(); start += 1000) {
    size_t end = std::min(detections.size(), start + 1000);
    std::vector<std::vector<Detection>> part(detections.begin() + long(start),
                                             detections.begin() + long(end));
    QueryFrameResult r = select_query_frame(part);
    r.frame += int(start);
    out.push_back(r);
  }
  return out;
}

namespace {

// Felzenszwalb & Huttenlocher 1-D squared distance transform.
void dt_1d(const std::vector<double>& f, std::vector<double>& d, int n) {
  std::vector<int> v(static_cast<size_t>(n));
  std::vector<double> z(size_t(n) + 1);
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s;
    while (true) {
      s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * (q - v[k]));
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

std::vector<double> distance_transform(const std::vector<uint8_t>& mask, int h, int w) {
  const double inf = 1e18;
  // Pad by one so the image border behaves as background.
  int ph = h + 2, pw = w + 2;
  std::vector<double> grid(size_t(ph) * pw, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      grid[size_t(y + 1) * pw + (x + 1)] = mask[size_t(y) * w + x] ? inf : 0.0;

  std::vector<double> col(static_cast<size_t>(ph)), dcol(static_cast<size_t>(ph));
  for (int x = 0; x < pw; ++x) {
    for (int y = 0; y < ph; ++y) col[y] = grid[size_t(y) * pw + x];
    dt_1d(col, dcol, ph);
    for (int y = 0; y < ph; ++y) grid[size_t(y) * pw + x] = dcol[y];
  }
  std::vector<double> row(static_cast<size_t>(pw)), drow(static_cast<size_t>(pw));
  for (int y = 0; y < ph; ++y) {
    for (int x = 0; x < pw; ++x) row[x] = grid[size_t(y) * pw + x];
    dt_1d(row, drow, pw);
    for (int x = 0; x < pw; ++x) grid[size_t(y) * pw + x] = drow[x];
  }

  std::vector<double> out(size_t(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out[size_t(y) * w + x] = std::sqrt(grid[size_t(y + 1) * pw + (x + 1)]);
  return out;
}

SamplingWeights sampling_weights(const std::vector<uint8_t>& mask, int h, int w) {
  SamplingWeights sw;
  std::vector<double> dist = distance_transform(mask, h, w);
  double z = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (mask[size_t(y) * w + x]) {
        double p = 1.0 / (dist[size_t(y) * w + x] + sw.epsilon_dt);
        sw.probabilities.push_back(p);
        sw.pixels.emplace_back(x, y);
        z += p;
      }
  if (sw.probabilities.empty()) throw DataError("sampling_weights: empty mask");
  for (double& p : sw.probabilities) p /= z;
  return sw;
}

std::vector<QueryPoint> sample_query_points(const SamplingWeights& weights, int n, int n_frames,
                                            std::mt19937_64& rng) {
  int n_dt = int(std::lround(weights.dt_fraction * n));
  int n_uni = n - n_dt;
  std::vector<double> cdf(weights.probabilities.size());
  std::partial_sum(weights.probabilities.begin(), weights.probabilities.end(), cdf.begin());
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> uframe(0, n_frames - 1);
  std::uniform_int_distribution<size_t> upix(0, weights.pixels.size() - 1);

  std::vector<QueryPoint> pts;
  pts.reserve(size_t(n));
  for (int k = 0; k < n_dt; ++k) {
    double r = u01(rng) * cdf.back();
    size_t idx = size_t(std::lower_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
    idx = std::min(idx, weights.pixels.size() - 1);
    pts.push_back({weights.pixels[idx].first, weights.pixels[idx].second, uframe(rng)});
  }
  for (int k = 0; k < n_uni; ++k) {
    size_t idx = upix(rng);
    pts.push_back({weights.pixels[idx].first, weights.pixels[idx].second, uframe(rng)});
  }
  return pts;
}

}  // namespace trackforge
