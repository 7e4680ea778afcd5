#include "trackforge/trackset.hpp"

#include <cmath>

namespace trackforge {

void TrackSet::validate() const {
  if (n <= 0 || t <= 0) throw DataError("TrackSet: empty");
  if (t_cond <= 0 || t_cond >= t) throw DataError("TrackSet: t_cond out of range");
  if (positions.size() != size_t(n) * t * 2 || visibility.size() != size_t(n) * t)
    throw DataError("TrackSet: shape mismatch");
  for (int i = 0; i < n; ++i) {
    for (int s = 0; s < t; ++s) {
      uint8_t v = vis(i, s);
      if (v != 0 && v != 1) throw DataError("TrackSet: visibility not in {0,1}");
      if (!std::isfinite(x(i, s)) || !std::isfinite(y(i, s)))
        throw DataError("TrackSet: non-finite position");
    }
  }
}

std::vector<double> DiffusionTarget::flatten_track(int i) const {
  std::vector<double> row(per_track_dim());
  size_t nv = size_t(t - 1) * 2;
  for (size_t k = 0; k < nv; ++k) row[k] = scaled_velocities[size_t(i) * nv + k];
  for (int s = 0; s < t; ++s) row[nv + s] = scaled_occlusion[size_t(i) * t + s];
  return row;
}

std::vector<double> normalize_to_bbox(const std::vector<double>& raw_points, int n, int t,
                                      const BBox& bbox, double margin_fraction) {
  double w = bbox.x1 - bbox.x0;
  double h = bbox.y1 - bbox.y0;
  if (w <= 0.0 || h <= 0.0) throw DataError("normalize_to_bbox: degenerate bbox");
  if (margin_fraction < 0.0) throw ConfigError("normalize_to_bbox: negative margin");
  double ex0 = bbox.x0 - margin_fraction * w;
  double ey0 = bbox.y0 - margin_fraction * h;
  double ew = w * (1.0 + 2.0 * margin_fraction);
  double eh = h * (1.0 + 2.0 * margin_fraction);
  std::vector<double> out(raw_points.size());
  for (size_t k = 0; k + 1 < raw_points.size(); k += 2) {
    out[k] = (raw_points[k] - ex0) / ew;
    out[k + 1] = (raw_points[k + 1] - ey0) / eh;
  }
  (void)n;
  (void)t;
  return out;
}

std::vector<double> denormalize_from_bbox(const std::vector<double>& norm_points, int n, int t,
                                          const BBox& bbox, double margin_fraction) {
  double w = bbox.x1 - bbox.x0;
  double h = bbox.y1 - bbox.y0;
  if (w <= 0.0 || h <= 0.0) throw DataError("denormalize_from_bbox: degenerate bbox");
  double ex0 = bbox.x0 - margin_fraction * w;
  double ey0 = bbox.y0 - margin_fraction * h;
  double ew = w * (1.0 + 2.0 * margin_fraction);
  double eh = h * (1.0 + 2.0 * margin_fraction);
  std::vector<double> out(norm_points.size());
  for (size_t k = 0; k + 1 < norm_points.size(); k += 2) {
    out[k] = norm_points[k] * ew + ex0;
    out[k + 1] = norm_points[k + 1] * eh + ey0;
  }
  (void)n;
  (void)t;
  return out;
}

namespace {

// Velocities for one track restricted to a frame window [0, t).
void track_velocities(const TrackSet& ts, int i, int t, double* out /* [t-1][2] */) {
  // prev_vis[s]: latest visible frame <= s; next_vis[s]: earliest >= s.
  std::vector<int> prev_vis(t, -1), next_vis(t, -1);
  int last = -1;
  for (int s = 0; s < t; ++s) {
    if (ts.vis(i, s)) last = s;
    prev_vis[s] = last;
  }
  int nxt = -1;
  for (int s = t - 1; s >= 0; --s) {
    if (ts.vis(i, s)) nxt = s;
    next_vis[s] = nxt;
  }
  for (int s = 0; s < t - 1; ++s) {
    int j = prev_vis[s];
    int k = next_vis[s + 1];
    if (j >= 0 && k >= 0) {
      double inv = 1.0 / double(k - j);
      out[2 * s] = (ts.x(i, k) - ts.x(i, j)) * inv;
      out[2 * s + 1] = (ts.y(i, k) - ts.y(i, j)) * inv;
    } else {
      out[2 * s] = 0.0;
      out[2 * s + 1] = 0.0;
    }
  }
}

}  // namespace

std::vector<double> velocities_from_positions(const TrackSet& tracks) {
  std::vector<double> v(size_t(tracks.n) * (tracks.t - 1) * 2, 0.0);
  for (int i = 0; i < tracks.n; ++i)
    track_velocities(tracks, i, tracks.t, &v[size_t(i) * (tracks.t - 1) * 2]);
  return v;
}

std::vector<double> positions_from_velocities(const std::vector<double>& start, int n,
                                              const std::vector<double>& velocities, int t) {
  std::vector<double> pos(size_t(n) * t * 2);
  for (int i = 0; i < n; ++i) {
    double cx = start[size_t(i) * 2];
    double cy = start[size_t(i) * 2 + 1];
    pos[size_t(i) * t * 2] = cx;
    pos[size_t(i) * t * 2 + 1] = cy;
    for (int s = 0; s < t - 1; ++s) {
      cx += velocities[size_t(i) * (t - 1) * 2 + size_t(s) * 2];
      cy += velocities[size_t(i) * (t - 1) * 2 + size_t(s) * 2 + 1];
      pos[size_t(i) * t * 2 + size_t(s + 1) * 2] = cx;
      pos[size_t(i) * t * 2 + size_t(s + 1) * 2 + 1] = cy;
    }
  }
  return pos;
}

std::optional<Vec2> displacement_conditioning(const TrackSet& tracks) {
  double sx = 0.0, sy = 0.0;
  int count = 0;
  int last = tracks.t - 1;
  for (int i = 0; i < tracks.n; ++i) {
    if (tracks.vis(i, last)) {
      sx += tracks.x(i, last) - tracks.x(i, 0);
      sy += tracks.y(i, last) - tracks.y(i, 0);
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return Vec2{sx / count, sy / count};
}

DiffusionTarget encode_target(const TrackSet& tracks, double scale_v, double scale_o) {
  if (scale_v <= 0.0 || scale_o <= 0.0) throw ConfigError("encode_target: non-positive scale");
  DiffusionTarget tgt;
  tgt.n = tracks.n;
  tgt.t = tracks.t;
  tgt.scale_v = scale_v;
  tgt.scale_o = scale_o;
  tgt.scaled_velocities = velocities_from_positions(tracks);
  for (double& v : tgt.scaled_velocities) v *= scale_v;
  tgt.scaled_occlusion.resize(size_t(tracks.n) * tracks.t);
  for (size_t k = 0; k < tgt.scaled_occlusion.size(); ++k)
    tgt.scaled_occlusion[k] = tracks.visibility[k] * scale_o;
  return tgt;
}

TrackSet decode_target(const DiffusionTarget& target, const std::vector<double>& start_points,
                       int t_cond, double fps) {
  if (target.scale_v <= 0.0 || target.scale_o <= 0.0)
    throw ConfigError("decode_target: non-positive scale");
  TrackSet ts;
  ts.n = target.n;
  ts.t = target.t;
  ts.t_cond = t_cond;
  ts.fps = fps;
  std::vector<double> vel(target.scaled_velocities.size());
  for (size_t k = 0; k < vel.size(); ++k) vel[k] = target.scaled_velocities[k] / target.scale_v;
  ts.positions = positions_from_velocities(start_points, target.n, vel, target.t);
  ts.visibility.resize(size_t(target.n) * target.t);
  // Midpoint threshold between the two clean occlusion levels {0, scale_o}.
  double thr = 0.5 * target.scale_o;
  for (size_t k = 0; k < ts.visibility.size(); ++k)
    ts.visibility[k] = target.scaled_occlusion[k] > thr ? 1 : 0;
  return ts;
}

Conditioning make_conditioning(const TrackSet& tracks) {
  Conditioning c;
  c.n = tracks.n;
  c.t_cond = tracks.t_cond;
  c.history_velocities.assign(size_t(tracks.n) * (tracks.t_cond - 1) * 2, 0.0);
  c.history_visibility.resize(size_t(tracks.n) * tracks.t_cond);
  c.start_points.resize(size_t(tracks.n) * 2);
  // History velocities use the full-track interpolation (a gap spanning the
  // history boundary still telescopes correctly downstream).
  std::vector<double> full = velocities_from_positions(tracks);
  for (int i = 0; i < tracks.n; ++i) {
    for (int s = 0; s < tracks.t_cond - 1; ++s) {
      c.history_velocities[(size_t(i) * (tracks.t_cond - 1) + s) * 2] =
          full[(size_t(i) * (tracks.t - 1) + s) * 2];
      c.history_velocities[(size_t(i) * (tracks.t_cond - 1) + s) * 2 + 1] =
          full[(size_t(i) * (tracks.t - 1) + s) * 2 + 1];
    }
    for (int s = 0; s < tracks.t_cond; ++s)
      c.history_visibility[size_t(i) * tracks.t_cond + s] = tracks.vis(i, s);
    c.start_points[size_t(i) * 2] = tracks.x(i, 0);
    c.start_points[size_t(i) * 2 + 1] = tracks.y(i, 0);
  }
  auto d = displacement_conditioning(tracks);
  if (d) {
    c.has_displacement = true;
    c.displacement = *d;
  }
  return c;
}

}  // namespace trackforge
