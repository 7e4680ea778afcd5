#include "trackforge/homography.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace trackforge {

Vec2 apply_homography(const Homography& h, const Vec2& p) {
  double w = h[6] * p[0] + h[7] * p[1] + h[8];
  return {(h[0] * p[0] + h[1] * p[1] + h[2]) / w, (h[3] * p[0] + h[4] * p[1] + h[5]) / w};
}

Homography invert_homography(const Homography& h) {
  Eigen::Matrix3d m;
  m << h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8];
  Eigen::Matrix3d inv = m.inverse();
  return {inv(0, 0), inv(0, 1), inv(0, 2), inv(1, 0), inv(1, 1),
          inv(1, 2), inv(2, 0), inv(2, 1), inv(2, 2)};
}

Homography compose(const Homography& a, const Homography& b) {
  Homography c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += a[i * 3 + k] * b[k * 3 + j];
      c[i * 3 + j] = s;
    }
  return c;
}

Homography normalize_homography(const Homography& h) {
  if (std::abs(h[8]) < 1e-15) throw NumericError("normalize_homography: h[2,2] ~ 0");
  Homography out = h;
  for (double& v : out) v /= h[8];
  return out;
}

double condition_number(const Homography& h) {
  Eigen::Matrix3d m;
  m << h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8];
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m);
  double smin = svd.singularValues()(2);
  if (smin <= 0) return std::numeric_limits<double>::infinity();
  return svd.singularValues()(0) / smin;
}

namespace {

// Hartley normalization: translate to centroid, scale mean distance to sqrt(2).
Eigen::Matrix3d normalizing_transform(const std::vector<Vec2>& pts) {
  double cx = 0, cy = 0;
  for (const auto& p : pts) {
    cx += p[0];
    cy += p[1];
  }
  cx /= double(pts.size());
  cy /= double(pts.size());
  double mean_dist = 0;
  for (const auto& p : pts) mean_dist += std::hypot(p[0] - cx, p[1] - cy);
  mean_dist /= double(pts.size());
  double s = mean_dist > 1e-12 ? std::sqrt(2.0) / mean_dist : 1.0;
  Eigen::Matrix3d t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

}  // namespace

Homography estimate_homography_dlt(const std::vector<Vec2>& src, const std::vector<Vec2>& dst) {
  if (src.size() < 4 || src.size() != dst.size())
    throw DataError("estimate_homography_dlt: need >= 4 correspondences");
  Eigen::Matrix3d ts = normalizing_transform(src);
  Eigen::Matrix3d td = normalizing_transform(dst);

  size_t n = src.size();
  Eigen::MatrixXd a(2 * n, 9);
  for (size_t i = 0; i < n; ++i) {
    double x = ts(0, 0) * src[i][0] + ts(0, 2);
    double y = ts(1, 1) * src[i][1] + ts(1, 2);
    double u = td(0, 0) * dst[i][0] + td(0, 2);
    double v = td(1, 1) * dst[i][1] + td(1, 2);
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  // Full V: with the minimal 4 correspondences A is 8x9 and the null-space
  // direction is the 9th right singular vector, which thin V would drop.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  Eigen::VectorXd hvec = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << hvec(0), hvec(1), hvec(2), hvec(3), hvec(4), hvec(5), hvec(6), hvec(7), hvec(8);
  Eigen::Matrix3d h = td.inverse() * hn * ts;
  Homography out = {h(0, 0), h(0, 1), h(0, 2), h(1, 0), h(1, 1),
                    h(1, 2), h(2, 0), h(2, 1), h(2, 2)};
  return normalize_homography(out);
}

RansacResult ransac_homography(const std::vector<Vec2>& src, const std::vector<Vec2>& dst,
                               const RansacParams& params, std::mt19937_64& rng) {
  RansacResult result;
  size_t n = src.size();
  if (n < 4) return result;

  std::uniform_int_distribution<size_t> pick(0, n - 1);
  double thr2 = params.inlier_threshold_px * params.inlier_threshold_px;
  size_t best_inliers = 0;
  Homography best{1, 0, 0, 0, 1, 0, 0, 0, 1};

  std::vector<Vec2> sample_src(4), sample_dst(4);
  for (int it = 0; it < params.iterations; ++it) {
    size_t idx[4];
    idx[0] = pick(rng);
    for (int k = 1; k < 4; ++k) {
      bool fresh;
      do {
        idx[k] = pick(rng);
        fresh = true;
        for (int j = 0; j < k; ++j) fresh = fresh && idx[k] != idx[j];
      } while (!fresh);
    }
    for (int k = 0; k < 4; ++k) {
      sample_src[k] = src[idx[k]];
      sample_dst[k] = dst[idx[k]];
    }
    Homography h;
    try {
      h = estimate_homography_dlt(sample_src, sample_dst);
    } catch (const std::exception&) {
      continue;
    }
    size_t inliers = 0;
    for (size_t i = 0; i < n; ++i) {
      Vec2 q = apply_homography(h, src[i]);
      double dx = q[0] - dst[i][0], dy = q[1] - dst[i][1];
      if (dx * dx + dy * dy < thr2) ++inliers;
    }
    if (inliers > best_inliers) {
      best_inliers = inliers;
      best = h;
    }
  }
  if (best_inliers < 4) return result;

  // Least-squares refinement on inliers, repeated.
  Homography h = best;
  for (int pass = 0; pass < params.refinement_passes; ++pass) {
    std::vector<Vec2> in_src, in_dst;
    for (size_t i = 0; i < n; ++i) {
      Vec2 q = apply_homography(h, src[i]);
      double dx = q[0] - dst[i][0], dy = q[1] - dst[i][1];
      if (dx * dx + dy * dy < thr2) {
        in_src.push_back(src[i]);
        in_dst.push_back(dst[i]);
      }
    }
    if (in_src.size() < 4) break;
    try {
      h = estimate_homography_dlt(in_src, in_dst);
    } catch (const std::exception&) {
      break;
    }
  }
  size_t final_inliers = 0;
  for (size_t i = 0; i < n; ++i) {
    Vec2 q = apply_homography(h, src[i]);
    double dx = q[0] - dst[i][0], dy = q[1] - dst[i][1];
    if (dx * dx + dy * dy < thr2) ++final_inliers;
  }
  result.h = h;
  result.inlier_ratio = double(final_inliers) / double(n);
  result.valid = true;
  return result;
}

HomographySeq estimate_stabilization(const std::vector<double>& bg, int b, int t,
                                     const std::vector<uint8_t>& visibility,
                                     const RansacParams& params, uint64_t seed) {
  HomographySeq seq;
  seq.reference_index = t / 2;
  seq.matrices.assign(size_t(t), {1, 0, 0, 0, 1, 0, 0, 0, 1});
  seq.inlier_ratios.assign(size_t(t), 0.0);
  if (b < 8) return seq;

  int ref = seq.reference_index;
  bool all_ok = true;
  for (int s = 0; s < t; ++s) {
    if (s == ref) {
      seq.inlier_ratios[s] = 1.0;
      continue;
    }
    std::vector<Vec2> src, dst;  // reference frame -> frame s
    for (int i = 0; i < b; ++i) {
      if (!visibility.empty() &&
          (!visibility[size_t(i) * t + ref] || !visibility[size_t(i) * t + s]))
        continue;
      src.push_back({bg[size_t(i) * t * 2 + size_t(ref) * 2], bg[size_t(i) * t * 2 + size_t(ref) * 2 + 1]});
      dst.push_back({bg[size_t(i) * t * 2 + size_t(s) * 2], bg[size_t(i) * t * 2 + size_t(s) * 2 + 1]});
    }
    if (src.size() < 4) {
      all_ok = false;
      continue;
    }
    std::mt19937_64 rng(splitmix64(seed ^ (uint64_t(s) << 20)));
    RansacResult r = ransac_homography(src, dst, params, rng);
    if (!r.valid) {
      all_ok = false;
      continue;
    }
    seq.matrices[s] = r.h;
    seq.inlier_ratios[s] = r.inlier_ratio;
  }
  double mean_ratio = 0;
  for (double v : seq.inlier_ratios) mean_ratio += v;
  mean_ratio /= double(t);
  bool conditioned = true;
  for (const auto& h : seq.matrices)
    if (condition_number(h) >= 1e8) conditioned = false;
  seq.valid = all_ok && mean_ratio > 0.5 && conditioned;
  return seq;
}

StabilizedTracks stabilize_tracks(const std::vector<double>& pixel_tracks, int n, int t,
                                  const HomographySeq& homographies, int anchor_frame) {
  if (!homographies.valid) throw DataError("stabilize_tracks: invalid homography sequence");
  StabilizedTracks out;
  out.positions.resize(size_t(n) * t * 2);
  out.point_valid.assign(size_t(n) * t, 1);

  const Homography& ha = homographies.matrices[size_t(anchor_frame)];
  for (int s = 0; s < t; ++s) {
    // H_anchor * H_s^{-1}: frame s -> reference -> anchor frame.
    Homography m = (s == anchor_frame)
                       ? Homography{1, 0, 0, 0, 1, 0, 0, 0, 1}
                       : compose(ha, invert_homography(homographies.matrices[size_t(s)]));
    for (int i = 0; i < n; ++i) {
      double x = pixel_tracks[size_t(i) * t * 2 + size_t(s) * 2];
      double y = pixel_tracks[size_t(i) * t * 2 + size_t(s) * 2 + 1];
      double w = m[6] * x + m[7] * y + m[8];
      if (std::abs(w) < 1e-9) {
        out.point_valid[size_t(i) * t + s] = 0;
        out.positions[size_t(i) * t * 2 + size_t(s) * 2] = x;
        out.positions[size_t(i) * t * 2 + size_t(s) * 2 + 1] = y;
        continue;
      }
      out.positions[size_t(i) * t * 2 + size_t(s) * 2] = (m[0] * x + m[1] * y + m[2]) / w;
      out.positions[size_t(i) * t * 2 + size_t(s) * 2 + 1] = (m[3] * x + m[4] * y + m[5]) / w;
    }
  }
  return out;
}

}  // namespace trackforge
