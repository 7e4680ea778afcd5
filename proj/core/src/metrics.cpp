#include "trackforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace trackforge {

namespace {

double scalar_variance(const Eigen::MatrixXd& values) {
  if (values.size() == 0) return 0.0;
  double mean = values.mean();
  return (values.array() - mean).square().mean();
}

TrackSet prediction_shell(const TrackSet& gt) {
  TrackSet pred = gt;
  for (int i = 0; i < pred.n; ++i)
    for (int s = gt.t_cond; s < gt.t; ++s) pred.vis(i, s) = 1;
  return pred;
}

}  // namespace

void EvalConfig::validate() const {
  if (k < 1 || pwt_thresholds.empty() || pixel_scale <= 0 || bucket_low >= bucket_high ||
      fvmd_grid_x < 1 || fvmd_grid_y < 1 || fvmd_grid_t < 1 || fvmd_angular_bins < 1)
    throw ConfigError("eval config: invalid settings");
  if (!std::is_sorted(pwt_thresholds.begin(), pwt_thresholds.end()))
    throw ConfigError("eval config: thresholds must be ascending");
}

Eigen::VectorXd MotionFeature::concat() const {
  Eigen::VectorXd out(velocity.size() + acceleration.size());
  out << velocity, acceleration;
  return out;
}

TrackSet baseline_no_motion(const TrackSet& gt) {
  TrackSet pred = prediction_shell(gt);
  int anchor = gt.t_cond - 1;
  for (int i = 0; i < pred.n; ++i)
    for (int s = gt.t_cond; s < gt.t; ++s) {
      pred.x(i, s) = gt.x(i, anchor);
      pred.y(i, s) = gt.y(i, anchor);
    }
  return pred;
}

TrackSet baseline_constant_velocity(const TrackSet& gt) {
  TrackSet pred = prediction_shell(gt);
  int anchor = gt.t_cond - 1;
  for (int i = 0; i < pred.n; ++i) {
    double vx = (gt.x(i, anchor) - gt.x(i, 0)) / double(anchor);
    double vy = (gt.y(i, anchor) - gt.y(i, 0)) / double(anchor);
    for (int s = gt.t_cond; s < gt.t; ++s) {
      pred.x(i, s) = gt.x(i, anchor) + vx * (s - anchor);
      pred.y(i, s) = gt.y(i, anchor) + vy * (s - anchor);
    }
  }
  return pred;
}

TrackSet baseline_oracle_velocity(const TrackSet& gt) {
  TrackSet pred = prediction_shell(gt);
  int anchor = gt.t_cond - 1;
  auto vel = velocities_from_positions(gt);
  double vx = 0, vy = 0;
  long count = 0;
  for (int i = 0; i < gt.n; ++i)
    for (int s = anchor; s < gt.t - 1; ++s) {
      vx += vel[(size_t(i) * (gt.t - 1) + size_t(s)) * 2];
      vy += vel[(size_t(i) * (gt.t - 1) + size_t(s)) * 2 + 1];
      ++count;
    }
  if (count > 0) {
    vx /= double(count);
    vy /= double(count);
  }
  for (int i = 0; i < pred.n; ++i)
    for (int s = gt.t_cond; s < gt.t; ++s) {
      pred.x(i, s) = gt.x(i, anchor) + vx * (s - anchor);
      pred.y(i, s) = gt.y(i, anchor) + vy * (s - anchor);
    }
  return pred;
}

std::pair<double, double> ade_fde(const TrackSet& pred, const TrackSet& gt, bool squared) {
  if (pred.n != gt.n || pred.t != gt.t) throw DataError("ade_fde: shape mismatch");
  double sum = 0, final_sum = 0;
  long count = 0, final_count = 0;
  for (int i = 0; i < gt.n; ++i)
    for (int s = gt.t_cond; s < gt.t; ++s) {
      if (!gt.vis(i, s)) continue;
      double d = std::hypot(pred.x(i, s) - gt.x(i, s), pred.y(i, s) - gt.y(i, s));
      if (squared) d *= d;
      sum += d;
      ++count;
      if (s == gt.t - 1) {
        final_sum += d;
        ++final_count;
      }
    }
  return {count ? sum / double(count) : 0.0,
          final_count ? final_sum / double(final_count) : 0.0};
}

double pwt(const TrackSet& pred, const TrackSet& gt, const EvalConfig& config) {
  if (pred.n != gt.n || pred.t != gt.t) throw DataError("pwt: shape mismatch");
  double total = 0;
  long count = 0;
  for (int i = 0; i < gt.n; ++i)
    for (int s = gt.t_cond; s < gt.t; ++s) {
      if (!gt.vis(i, s)) continue;
      double d = config.pixel_scale *
                 std::hypot(pred.x(i, s) - gt.x(i, s), pred.y(i, s) - gt.y(i, s));
      double within = 0;
      for (double thr : config.pwt_thresholds)
        if (d <= thr) within += 1.0;
      total += within / double(config.pwt_thresholds.size());
      ++count;
    }
  return count ? total / double(count) : 0.0;
}

double frechet_gaussian(const Eigen::MatrixXd& set_a, const Eigen::MatrixXd& set_b,
                        bool* regularized) {
  if (set_a.cols() != set_b.cols()) throw DataError("frechet_gaussian: dimension mismatch");
  if (set_a.rows() < 1 || set_b.rows() < 1) throw DataError("frechet_gaussian: empty set");
  Eigen::Index dim = set_a.cols();
  Eigen::Index na = set_a.rows(), nb = set_b.rows();
  if (regularized) *regularized = false;

  Eigen::RowVectorXd mu_a = set_a.colwise().mean();
  Eigen::RowVectorXd mu_b = set_b.colwise().mean();
  double mean_term = (mu_a - mu_b).squaredNorm();
  Eigen::MatrixXd ac = set_a.rowwise() - mu_a;
  Eigen::MatrixXd bc = set_b.rowwise() - mu_b;
  double ca = na > 1 ? double(na - 1) : 1.0;
  double cb = nb > 1 ? double(nb - 1) : 1.0;

  if (dim > std::max(na, nb)) {
    // High-dimensional, low-sample case: the nonzero eigenvalues of
    // cov_a*cov_b match those of (ac bc^T)(bc ac^T) / (ca*cb).
    double tr_a = ac.squaredNorm() / ca;
    double tr_b = bc.squaredNorm() / cb;
    Eigen::MatrixXd c = ac * bc.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c * c.transpose() / (ca * cb));
    double tr_sqrt = 0;
    for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i)
      tr_sqrt += std::sqrt(std::max(0.0, eig.eigenvalues()(i)));
    return mean_term + tr_a + tr_b - 2.0 * tr_sqrt;
  }

  Eigen::MatrixXd cov_a = ac.transpose() * ac / ca;
  Eigen::MatrixXd cov_b = bc.transpose() * bc / cb;
  if (na < dim + 1 || nb < dim + 1) {
    cov_a += 1e-6 * Eigen::MatrixXd::Identity(dim, dim);
    cov_b += 1e-6 * Eigen::MatrixXd::Identity(dim, dim);
    if (regularized) *regularized = true;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_a(cov_a);
  Eigen::MatrixXd sqrt_a =
      eig_a.eigenvectors() *
      eig_a.eigenvalues().array().max(0.0).sqrt().matrix().asDiagonal() *
      eig_a.eigenvectors().transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_m(sqrt_a * cov_b * sqrt_a);
  double tr_sqrt = 0;
  for (Eigen::Index i = 0; i < eig_m.eigenvalues().size(); ++i)
    tr_sqrt += std::sqrt(std::max(0.0, eig_m.eigenvalues()(i)));
  return mean_term + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
}

MotionFeature fvmd_features(const TrackSet& tracks, const EvalConfig& config) {
  int gx = config.fvmd_grid_x, gy = config.fvmd_grid_y, gt_cells = config.fvmd_grid_t;
  int nb = config.fvmd_angular_bins;
  Eigen::Index size = Eigen::Index(gx) * gy * gt_cells * nb;
  MotionFeature feat;
  feat.velocity = Eigen::VectorXd::Zero(size);
  feat.acceleration = Eigen::VectorXd::Zero(size);

  int first = tracks.t_cond - 1;        // anchor frame
  int horizon = tracks.t - 1 - first;   // number of velocity steps
  if (horizon < 1) return feat;
  double sector = 2.0 * M_PI / nb;

  auto accumulate = [&](Eigen::VectorXd& hist, double px, double py, double vx, double vy,
                        int step, int n_steps) {
    double m = std::hypot(vx, vy);
    double w = std::ceil(std::log2(std::min(m, 255.0) + 1.0));
    if (w <= 0.0) return;
    int cx = std::clamp(int(std::floor(px * gx)), 0, gx - 1);
    int cy = std::clamp(int(std::floor(py * gy)), 0, gy - 1);
    int ct = std::clamp(step * gt_cells / std::max(1, n_steps), 0, gt_cells - 1);
    double theta = std::atan2(vy, vx) + sector / 2.0;
    int bin = int(std::floor(theta / sector));
    bin = ((bin % nb) + nb) % nb;
    Eigen::Index idx = ((Eigen::Index(ct) * gy + cy) * gx + cx) * nb + bin;
    hist(idx) += w;
  };

  for (int i = 0; i < tracks.n; ++i) {
    double prev_vx = 0, prev_vy = 0;
    for (int s = first; s < tracks.t - 1; ++s) {
      double vx = (tracks.x(i, s + 1) - tracks.x(i, s)) * config.pixel_scale;
      double vy = (tracks.y(i, s + 1) - tracks.y(i, s)) * config.pixel_scale;
      accumulate(feat.velocity, tracks.x(i, s), tracks.y(i, s), vx, vy, s - first, horizon);
      if (s > first)
        accumulate(feat.acceleration, tracks.x(i, s), tracks.y(i, s), vx - prev_vx, vy - prev_vy,
                   s - first - 1, std::max(1, horizon - 1));
      prev_vx = vx;
      prev_vy = vy;
    }
  }
  return feat;
}

double fvmd(const std::vector<MotionFeature>& features_a,
            const std::vector<MotionFeature>& features_b) {
  if (features_a.empty() || features_b.empty()) throw DataError("fvmd: empty feature set");
  Eigen::Index dim = features_a.front().concat().size();
  Eigen::MatrixXd a(Eigen::Index(features_a.size()), dim);
  Eigen::MatrixXd b(Eigen::Index(features_b.size()), dim);
  for (size_t i = 0; i < features_a.size(); ++i) a.row(Eigen::Index(i)) = features_a[i].concat();
  for (size_t i = 0; i < features_b.size(); ++i) b.row(Eigen::Index(i)) = features_b[i].concat();
  return frechet_gaussian(a, b);
}

double vmd(const MotionFeature& a, const MotionFeature& b) {
  return (a.concat() - b.concat()).norm();
}

double trajectory_variance(const std::vector<TrackSet>& samples) {
  std::vector<double> values;
  for (const auto& s : samples)
    for (int i = 0; i < s.n; ++i)
      for (int f = s.t_cond; f < s.t; ++f) {
        values.push_back(s.x(i, f) - s.x(i, 0));
        values.push_back(s.y(i, f) - s.y(i, 0));
      }
  if (values.empty()) return 0.0;
  Eigen::Map<Eigen::MatrixXd> m(values.data(), Eigen::Index(values.size()), 1);
  return scalar_variance(m);
}

Eigen::MatrixXd difference_vectors(const TrackSet& tracks, int order, const EvalConfig& config) {
  if (order != 1 && order != 2) throw ConfigError("difference_vectors: order must be 1 or 2");
  int first = tracks.t_cond - 1;
  int n_vel = tracks.t - 1 - first;
  int dim = order == 1 ? 2 * n_vel : 2 * (n_vel - 1);
  if (dim <= 0) return Eigen::MatrixXd(0, 0);

  std::vector<Eigen::VectorXd> rows;
  for (int i = 0; i < tracks.n; ++i) {
    bool fully_visible = true;
    for (int s = first; s < tracks.t; ++s)
      if (!tracks.vis(i, s)) fully_visible = false;
    if (!fully_visible) continue;
    Eigen::VectorXd vel(2 * n_vel);
    for (int s = 0; s < n_vel; ++s) {
      vel(2 * s) = (tracks.x(i, first + s + 1) - tracks.x(i, first + s)) * config.pixel_scale;
      vel(2 * s + 1) = (tracks.y(i, first + s + 1) - tracks.y(i, first + s)) * config.pixel_scale;
    }
    if (order == 1) {
      rows.push_back(vel);
    } else {
      Eigen::VectorXd acc(dim);
      for (int s = 0; s < n_vel - 1; ++s) {
        acc(2 * s) = vel(2 * (s + 1)) - vel(2 * s);
        acc(2 * s + 1) = vel(2 * (s + 1) + 1) - vel(2 * s + 1);
      }
      rows.push_back(acc);
    }
  }
  Eigen::MatrixXd out(Eigen::Index(rows.size()), dim);
  for (size_t i = 0; i < rows.size(); ++i) out.row(Eigen::Index(i)) = rows[i];
  return out;
}

double best_of_k(const std::vector<double>& values, bool higher_better) {
  if (values.empty()) throw DataError("best_of_k: empty");
  return higher_better ? *std::max_element(values.begin(), values.end())
                       : *std::min_element(values.begin(), values.end());
}

double mean_future_motion_px(const TrackSet& gt, const EvalConfig& config) {
  double sum = 0;
  long count = 0;
  for (int i = 0; i < gt.n; ++i)
    for (int s = gt.t_cond - 1; s < gt.t - 1; ++s) {
      sum += config.pixel_scale *
             std::hypot(gt.x(i, s + 1) - gt.x(i, s), gt.y(i, s + 1) - gt.y(i, s));
      ++count;
    }
  return count ? sum / double(count) : 0.0;
}

std::string bucket_name(double motion_px, const EvalConfig& config) {
  if (motion_px < config.bucket_low) return "low";
  if (motion_px <= config.bucket_high) return "medium";
  return "high";
}

std::vector<ReportRow> evaluate(const std::string& method, const SampleFn& sample, int k_samples,
                                const std::vector<EvalExample>& dataset,
                                const EvalConfig& config) {
  config.validate();
  if (dataset.empty()) throw DataError("evaluate: empty dataset");
  if (k_samples < 1) throw ConfigError("evaluate: k_samples must be positive");

  struct BucketAccum {
    double ade = 0, fde = 0, pwt = 0, vmd = 0;
    long n = 0;
    std::vector<Eigen::MatrixXd> pred_v, gt_v, pred_a, gt_a;
    std::vector<MotionFeature> pred_feats, gt_feats;
    std::vector<TrackSet> pred_samples;
  };
  std::map<std::string, BucketAccum> buckets;

  for (const auto& ex : dataset) {
    std::string bucket = bucket_name(mean_future_motion_px(ex.gt, config), config);
    MotionFeature gt_feat = fvmd_features(ex.gt, config);
    std::vector<double> ades, fdes, pwts, vmds;
    TrackSet first_pred;
    for (int k = 0; k < k_samples; ++k) {
      TrackSet pred = sample(ex, k);
      if (k == 0) first_pred = pred;
      auto [a, f] = ade_fde(pred, ex.gt, config.squared_errors);
      ades.push_back(a);
      fdes.push_back(f);
      pwts.push_back(pwt(pred, ex.gt, config));
      vmds.push_back(vmd(fvmd_features(pred, config), gt_feat));
      for (auto* acc : {&buckets[bucket], &buckets["combined"]})
        acc->pred_samples.push_back(pred);
    }
    for (auto* acc : {&buckets[bucket], &buckets["combined"]}) {
      acc->ade += best_of_k(ades, false);
      acc->fde += best_of_k(fdes, false);
      acc->pwt += best_of_k(pwts, true);
      acc->vmd += best_of_k(vmds, false);
      ++acc->n;
      acc->pred_v.push_back(difference_vectors(first_pred, 1, config));
      acc->gt_v.push_back(difference_vectors(ex.gt, 1, config));
      acc->pred_a.push_back(difference_vectors(first_pred, 2, config));
      acc->gt_a.push_back(difference_vectors(ex.gt, 2, config));
      acc->pred_feats.push_back(fvmd_features(first_pred, config));
      acc->gt_feats.push_back(gt_feat);
    }
  }

  auto stack = [](const std::vector<Eigen::MatrixXd>& mats) {
    Eigen::Index rows = 0, cols = 0;
    for (const auto& m : mats) {
      rows += m.rows();
      cols = std::max(cols, m.cols());
    }
    Eigen::MatrixXd out(rows, cols);
    Eigen::Index r = 0;
    for (const auto& m : mats) {
      if (m.rows() > 0) out.middleRows(r, m.rows()) = m;
      r += m.rows();
    }
    return out;
  };

  std::vector<ReportRow> rows;
  for (auto& [bucket, acc] : buckets) {
    double inv = 1.0 / double(acc.n);
    rows.push_back({method, bucket, "ade", acc.ade * inv});
    rows.push_back({method, bucket, "fde", acc.fde * inv});
    rows.push_back({method, bucket, "pwt", acc.pwt * inv});
    rows.push_back({method, bucket, "vmd", acc.vmd * inv});
    Eigen::MatrixXd pv = stack(acc.pred_v), gv = stack(acc.gt_v);
    Eigen::MatrixXd pa = stack(acc.pred_a), ga = stack(acc.gt_a);
    if (pv.rows() >= 2 && gv.rows() >= 2)
      rows.push_back({method, bucket, "fd_v", frechet_gaussian(pv, gv)});
    if (pa.rows() >= 2 && ga.rows() >= 2)
      rows.push_back({method, bucket, "fd_a", frechet_gaussian(pa, ga)});
    rows.push_back({method, bucket, "var_v", scalar_variance(pv)});
    rows.push_back({method, bucket, "var_a", scalar_variance(pa)});
    if (acc.pred_feats.size() >= 2)
      rows.push_back({method, bucket, "fvmd", fvmd(acc.pred_feats, acc.gt_feats)});
    rows.push_back({method, bucket, "traj_var", trajectory_variance(acc.pred_samples)});
    rows.push_back({method, bucket, "n_examples", double(acc.n)});
  }
  return rows;
}

}  // namespace trackforge
