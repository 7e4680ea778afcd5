#include <cmath>
#include <random>

#include "doctest.h"
#include "trackforge/metrics.hpp"

using namespace trackforge;

namespace {

// Straight-line motion: constant velocity per track, fully visible.
TrackSet linear_tracks(int n, int t, double step_px, uint64_t seed, int t_cond = 4) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.1, 0.4);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * M_PI);
  TrackSet ts;
  ts.resize(n, t);
  ts.t_cond = t_cond;
  for (int i = 0; i < n; ++i) {
    double x = u(rng), y = u(rng);
    double a = ang(rng);
    double vx = step_px / 256.0 * std::cos(a);
    double vy = step_px / 256.0 * std::sin(a);
    for (int s = 0; s < t; ++s) {
      ts.x(i, s) = x + vx * s;
      ts.y(i, s) = y + vy * s;
    }
  }
  return ts;
}

double find_row(const std::vector<ReportRow>& rows, const std::string& bucket,
                const std::string& metric) {
  for (const auto& r : rows)
    if (r.bucket == bucket && r.metric == metric) return r.value;
  throw std::runtime_error("row not found: " + bucket + "/" + metric);
}

}  // namespace

TEST_CASE("eval config validation") {
  EvalConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  EvalConfig bad = cfg;
  bad.pwt_thresholds = {4, 2, 1};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.bucket_low = 2.0;  // above bucket_high
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("ade/fde identities and hand case") {
  TrackSet gt = linear_tracks(3, 8, 1.0, 1);
  auto [ade0, fde0] = ade_fde(gt, gt);
  CHECK(ade0 == 0.0);
  CHECK(fde0 == 0.0);

  // Uniform offset of 3/256 in x over the whole horizon.
  TrackSet pred = gt;
  for (int i = 0; i < gt.n; ++i)
    for (int s = 0; s < gt.t; ++s) pred.x(i, s) += 3.0 / 256.0;
  auto [ade, fde] = ade_fde(pred, gt);
  CHECK(ade == doctest::Approx(3.0 / 256.0).epsilon(1e-12));
  CHECK(fde == doctest::Approx(3.0 / 256.0).epsilon(1e-12));
  auto [ade_sq, fde_sq] = ade_fde(pred, gt, /*squared=*/true);
  CHECK(ade_sq == doctest::Approx(std::pow(3.0 / 256.0, 2)).epsilon(1e-12));
  CHECK(fde_sq == doctest::Approx(std::pow(3.0 / 256.0, 2)).epsilon(1e-12));
}

TEST_CASE("ade/fde skips GT-occluded frames and conditioning frames") {
  TrackSet gt = linear_tracks(1, 6, 1.0, 2, 2);
  TrackSet pred = gt;
  // Large error inside the conditioning window: ignored.
  pred.x(0, 0) += 1.0;
  pred.x(0, 1) += 1.0;
  // Error on an occluded future frame: ignored.
  gt.vis(0, 3) = 0;
  pred.x(0, 3) += 1.0;
  auto [ade, fde] = ade_fde(pred, gt);
  CHECK(ade == 0.0);
  CHECK(fde == 0.0);
}

TEST_CASE("pwt hand cases at the standard thresholds") {
  EvalConfig cfg;
  TrackSet gt = linear_tracks(1, 6, 1.0, 3, 2);
  auto offset_pred = [&](double px) {
    TrackSet pred = gt;
    for (int s = gt.t_cond; s < gt.t; ++s) pred.x(0, s) += px / cfg.pixel_scale;
    return pred;
  };
  // 0.5 px: within all of {1,2,4,8,16}.
  CHECK(pwt(offset_pred(0.5), gt, cfg) == doctest::Approx(1.0));
  // 3 px: within {4,8,16} only.
  CHECK(pwt(offset_pred(3.0), gt, cfg) == doctest::Approx(3.0 / 5.0));
  // 20 px: outside every threshold.
  CHECK(pwt(offset_pred(20.0), gt, cfg) == doctest::Approx(0.0));
  // Threshold boundaries are inclusive.
  CHECK(pwt(offset_pred(16.0), gt, cfg) == doctest::Approx(1.0 / 5.0));
}

TEST_CASE("baselines: exactness and dominance on linear motion") {
  TrackSet gt = linear_tracks(4, 10, 2.0, 4);
  TrackSet cv = baseline_constant_velocity(gt);
  TrackSet om = baseline_oracle_velocity(gt);
  TrackSet nm = baseline_no_motion(gt);
  // Per-track constant velocity reproduces straight lines exactly.
  CHECK(ade_fde(cv, gt).first < 1e-12);
  double ade_nm = ade_fde(nm, gt).first;
  double ade_om = ade_fde(om, gt).first;
  CHECK(ade_nm > ade_om);  // shared mean velocity beats standing still
  CHECK(ade_nm > 0.0);
  // Conditioning frames are copied through in every baseline.
  for (int s = 0; s < gt.t_cond; ++s) {
    CHECK(nm.x(0, s) == gt.x(0, s));
    CHECK(cv.x(0, s) == gt.x(0, s));
  }
  // Predictions mark every future point visible.
  TrackSet occluded = gt;
  occluded.vis(1, 7) = 0;
  TrackSet pred = baseline_no_motion(occluded);
  CHECK(pred.vis(1, 7) == 1);
}

TEST_CASE("1-D Frechet closed form: unit mean shift, equal variance") {
  // Sample mean 1 apart, equal sample variances: d^2 = 1 exactly.
  Eigen::MatrixXd a(2, 1), b(2, 1);
  a << 0.0, 2.0;
  b << 1.0, 3.0;
  bool reg = true;
  CHECK(frechet_gaussian(a, b, &reg) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK_FALSE(reg);
  // Identity of indiscernibles.
  CHECK(frechet_gaussian(a, a) == doctest::Approx(0.0));
  // Variance-only case: d^2 = (sigma_a - sigma_b)^2.
  Eigen::MatrixXd c(3, 1);
  c << -2.0, 1.0, 1.0;  // mean 0, var 3
  Eigen::MatrixXd d(3, 1);
  d << -4.0, 2.0, 2.0;  // mean 0, var 12
  double expect = std::pow(std::sqrt(3.0) - std::sqrt(12.0), 2);
  CHECK(frechet_gaussian(c, d) == doctest::Approx(expect).epsilon(1e-8));
}

TEST_CASE("Frechet distance is 2-homogeneous under scaling") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd a(40, 3), b(40, 3);
  for (Eigen::Index i = 0; i < 40; ++i)
    for (Eigen::Index j = 0; j < 3; ++j) {
      a(i, j) = g(rng);
      b(i, j) = g(rng) + 0.5;
    }
  double base = frechet_gaussian(a, b);
  double scaled = frechet_gaussian((3.0 * a).eval(), (3.0 * b).eval());
  CHECK(scaled == doctest::Approx(9.0 * base).epsilon(1e-8));
}

TEST_CASE("Frechet regularization engages for sample-starved covariances") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Random(3, 3);
  Eigen::MatrixXd b = Eigen::MatrixXd::Random(3, 3);
  bool reg = false;
  frechet_gaussian(a, b, &reg);
  CHECK(reg);  // 3 samples < dim + 1 = 4
  Eigen::MatrixXd big_a = Eigen::MatrixXd::Random(10, 3);
  Eigen::MatrixXd big_b = Eigen::MatrixXd::Random(10, 3);
  frechet_gaussian(big_a, big_b, &reg);
  CHECK_FALSE(reg);
}

TEST_CASE("low-rank Gram path agrees with the direct eigendecomposition") {
  const Eigen::Index n = 4, dim = 7;  // dim > samples triggers the Gram path
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd a(n, dim), b(n, dim);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) {
      a(i, j) = g(rng);
      b(i, j) = 0.8 * g(rng) + 0.3;
    }
  double got = frechet_gaussian(a, b);

  // Oracle: build the rank-deficient covariances explicitly and take the
  // trace sqrt from the eigenvalues of cov_a * cov_b.
  Eigen::RowVectorXd mu_a = a.colwise().mean(), mu_b = b.colwise().mean();
  Eigen::MatrixXd ac = a.rowwise() - mu_a, bc = b.rowwise() - mu_b;
  Eigen::MatrixXd cov_a = ac.transpose() * ac / double(n - 1);
  Eigen::MatrixXd cov_b = bc.transpose() * bc / double(n - 1);
  Eigen::EigenSolver<Eigen::MatrixXd> eig(cov_a * cov_b);
  double tr_sqrt = 0;
  for (Eigen::Index i = 0; i < dim; ++i)
    tr_sqrt += std::sqrt(std::max(0.0, eig.eigenvalues()(i).real()));
  double expect =
      (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
  CHECK(got == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("FVMD magnitude weights follow the log table") {
  EvalConfig cfg;
  auto single_step_weight = [&](double magnitude_px) {
    TrackSet ts;
    ts.resize(1, 3);
    ts.t_cond = 2;
    ts.x(0, 2) = ts.x(0, 1) + magnitude_px / cfg.pixel_scale;
    return fvmd_features(ts, cfg).velocity.sum();
  };
  CHECK(single_step_weight(0.0) == 0.0);
  CHECK(single_step_weight(1.0) == 1.0);
  CHECK(single_step_weight(255.0) == 8.0);
  // Magnitudes clamp at 255.
  CHECK(single_step_weight(10000.0) == 8.0);
  CHECK(single_step_weight(3.0) == 2.0);  // ceil(log2(4)) = 2
}

TEST_CASE("FVMD orientation bin 0 is centered on +x") {
  EvalConfig cfg;
  TrackSet ts;
  ts.resize(1, 3);
  ts.t_cond = 2;
  // Anchor point at the origin cell, one +x step of 4 px.
  ts.x(0, 2) = ts.x(0, 1) + 4.0 / cfg.pixel_scale;
  Eigen::VectorXd hist = fvmd_features(ts, cfg).velocity;
  CHECK(hist(0) > 0.0);  // cell (0,0,0), bin 0
  CHECK(hist.sum() == hist(0));

  // Step along +y lands in the quarter-turn bin instead.
  TrackSet up = ts;
  up.x(0, 2) = up.x(0, 1);
  up.y(0, 2) = up.y(0, 1) + 4.0 / cfg.pixel_scale;
  Eigen::VectorXd hist_up = fvmd_features(up, cfg).velocity;
  CHECK(hist_up(0) == 0.0);
  CHECK(hist_up(cfg.fvmd_angular_bins / 4) > 0.0);
}

TEST_CASE("vmd is the Euclidean distance between feature vectors") {
  EvalConfig cfg;
  TrackSet a = linear_tracks(3, 8, 4.0, 21);
  TrackSet b = linear_tracks(3, 8, 4.0, 22);
  MotionFeature fa = fvmd_features(a, cfg);
  MotionFeature fb = fvmd_features(b, cfg);
  CHECK(vmd(fa, fa) == 0.0);
  CHECK(vmd(fa, fb) == doctest::Approx((fa.concat() - fb.concat()).norm()));
}

TEST_CASE("fvmd of a distribution against itself is zero") {
  EvalConfig cfg;
  std::vector<MotionFeature> feats;
  for (int k = 0; k < 5; ++k)
    feats.push_back(fvmd_features(linear_tracks(3, 8, 2.0, 30 + uint64_t(k)), cfg));
  // The Gram-path trace terms cancel only to floating-point accuracy.
  CHECK(std::abs(fvmd(feats, feats)) < 1e-4);
  CHECK_THROWS_AS(fvmd({}, feats), DataError);
}

TEST_CASE("trajectory variance closed form") {
  TrackSet ts;
  ts.resize(1, 2);
  ts.t_cond = 1;
  ts.x(0, 1) = 2.0;  // start-subtracted future coords: {2, 0}
  CHECK(trajectory_variance({ts}) == doctest::Approx(1.0));
  // Identical samples add no variance.
  CHECK(trajectory_variance({ts, ts}) == doctest::Approx(1.0));
  CHECK(trajectory_variance({}) == 0.0);
}

TEST_CASE("difference vectors are restricted to fully visible tracks") {
  EvalConfig cfg;
  TrackSet ts = linear_tracks(3, 6, 2.0, 41, 2);
  ts.vis(1, 4) = 0;  // track 1 drops out
  Eigen::MatrixXd v = difference_vectors(ts, 1, cfg);
  Eigen::MatrixXd a = difference_vectors(ts, 2, cfg);
  CHECK(v.rows() == 2);
  CHECK(v.cols() == 2 * (6 - ts.t_cond));
  CHECK(a.rows() == 2);
  CHECK(a.cols() == 2 * (6 - ts.t_cond - 1));
  // Constant velocity: every acceleration entry vanishes.
  CHECK(a.cwiseAbs().maxCoeff() < 1e-9);
  // Velocity entries are per-step displacements at pixel scale.
  double expect_vx = (ts.x(0, 2) - ts.x(0, 1)) * cfg.pixel_scale;
  CHECK(v(0, 0) == doctest::Approx(expect_vx));
  CHECK_THROWS_AS(difference_vectors(ts, 3, cfg), ConfigError);
}

TEST_CASE("best_of_k picks the right extremum") {
  CHECK(best_of_k({3.0, 1.0, 2.0}, false) == 1.0);
  CHECK(best_of_k({3.0, 1.0, 2.0}, true) == 3.0);
  CHECK_THROWS_AS(best_of_k({}, false), DataError);
}

TEST_CASE("motion buckets split at 0.5 and 1.5 px") {
  EvalConfig cfg;
  CHECK(bucket_name(0.3, cfg) == "low");
  CHECK(bucket_name(1.0, cfg) == "medium");
  CHECK(bucket_name(1.5, cfg) == "medium");
  CHECK(bucket_name(2.0, cfg) == "high");
  TrackSet ts = linear_tracks(4, 8, 2.0, 51);
  CHECK(mean_future_motion_px(ts, cfg) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("evaluate emits per-bucket and combined rows with best-of-k reduction") {
  EvalConfig cfg;
  std::vector<EvalExample> dataset;
  for (int k = 0; k < 4; ++k)
    dataset.push_back({linear_tracks(4, 10, 2.0, 60 + uint64_t(k)), Eigen::MatrixXd()});
  for (int k = 0; k < 4; ++k)
    dataset.push_back({linear_tracks(4, 10, 0.2, 70 + uint64_t(k)), Eigen::MatrixXd()});

  // Sample 0 is the exact constant-velocity answer, sample 1 is corrupted;
  // best-of-2 must keep the exact one.
  SampleFn sampler = [](const EvalExample& ex, int k) {
    TrackSet pred = baseline_constant_velocity(ex.gt);
    if (k == 1)
      for (int i = 0; i < pred.n; ++i) pred.x(i, pred.t - 1) += 0.5;
    return pred;
  };
  auto rows = evaluate("const-vel", sampler, 2, dataset, cfg);
  CHECK(find_row(rows, "high", "n_examples") == doctest::Approx(4.0));
  CHECK(find_row(rows, "low", "n_examples") == doctest::Approx(4.0));
  CHECK(find_row(rows, "combined", "n_examples") == doctest::Approx(8.0));
  CHECK(find_row(rows, "combined", "ade") < 1e-12);
  CHECK(find_row(rows, "combined", "fde") < 1e-12);
  CHECK(find_row(rows, "combined", "pwt") == doctest::Approx(1.0));
  CHECK(find_row(rows, "high", "fvmd") >= 0.0);
  for (const auto& r : rows) CHECK(r.method == "const-vel");
  CHECK_THROWS_AS(evaluate("x", sampler, 0, dataset, cfg), ConfigError);
  CHECK_THROWS_AS(evaluate("x", sampler, 2, {}, cfg), DataError);
}
