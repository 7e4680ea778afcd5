#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "trackforge/trackset.hpp"

namespace trackforge {

struct EvalConfig {
  int k = 5;  // stochastic samples per example
  std::vector<double> pwt_thresholds = {1, 2, 4, 8, 16};
  double pixel_scale = 256.0;
  double bucket_low = 0.5;   // px/frame edges between motion buckets
  double bucket_high = 1.5;
  int fvmd_grid_x = 16, fvmd_grid_y = 16, fvmd_grid_t = 8;
  int fvmd_angular_bins = 8;
  bool squared_errors = false;  // squared Euclidean ADE/FDE variant

  void validate() const;
};

// Log-magnitude-weighted orientation histograms of velocities and
// accelerations over a spatial x temporal grid.
struct MotionFeature {
  Eigen::VectorXd velocity;
  Eigen::VectorXd acceleration;

  Eigen::VectorXd concat() const;
};

struct ReportRow {
  std::string method;
  std::string bucket;  // "low" | "medium" | "high" | "combined"
  std::string metric;
  double value = 0.0;
};

// Baselines predict the post-conditioning frames from the first t_cond
// frames; every predicted point is marked visible.
TrackSet baseline_no_motion(const TrackSet& gt);
TrackSet baseline_constant_velocity(const TrackSet& gt);
TrackSet baseline_oracle_velocity(const TrackSet& gt);

// Mean (or final-frame) distance over GT-visible points in the predicted
// horizon. squared selects the squared-distance variant.
std::pair<double, double> ade_fde(const TrackSet& pred, const TrackSet& gt, bool squared = false);

// Fraction of GT-visible predictions within the pixel thresholds after
// scaling normalized errors by pixel_scale, averaged over thresholds.
double pwt(const TrackSet& pred, const TrackSet& gt, const EvalConfig& config);

// Squared Fréchet distance between Gaussian fits of two vector sets (rows =
// samples). Uses a low-rank Gram computation when dimension exceeds the
// sample counts; otherwise covariance is regularized by 1e-6 I when samples
// < dim + 1 (reported through regularized when given).
double frechet_gaussian(const Eigen::MatrixXd& set_a, const Eigen::MatrixXd& set_b,
                        bool* regularized = nullptr);

// Per-prediction motion histograms over the post-conditioning horizon.
MotionFeature fvmd_features(const TrackSet& tracks, const EvalConfig& config);

// Fréchet distance between per-example motion-feature distributions.
double fvmd(const std::vector<MotionFeature>& features_a,
            const std::vector<MotionFeature>& features_b);

// Euclidean distance between two examples' motion features.
double vmd(const MotionFeature& a, const MotionFeature& b);

// Population variance of predicted coordinates after subtracting each
// track's start point, pooled over all samples.
double trajectory_variance(const std::vector<TrackSet>& samples);

// Per-track flattened first (velocity) or second (acceleration) difference
// vectors of fully visible tracks at pixel scale; one row per track.
Eigen::MatrixXd difference_vectors(const TrackSet& tracks, int order, const EvalConfig& config);

double best_of_k(const std::vector<double>& values, bool higher_better);

// Mean per-frame step magnitude in pixels over the predicted horizon.
double mean_future_motion_px(const TrackSet& gt, const EvalConfig& config);
std::string bucket_name(double motion_px, const EvalConfig& config);

struct EvalExample {
  TrackSet gt;
  Eigen::MatrixXd features;  // [n, feature_dim], may be empty for baselines
};

// Produces the k-th prediction for an example (k = 0..K-1).
using SampleFn = std::function<TrackSet(const EvalExample& example, int k)>;

// Full evaluation of one method: per-example best-of-K for ADE/FDE/PWT/VMD,
// distribution-level FD(V)/FD(A)/Var(V)/Var(A)/FVMD/trajectory variance,
// reported per motion bucket plus a combined row set.
std::vector<ReportRow> evaluate(const std::string& method, const SampleFn& sample, int k_samples,
                                const std::vector<EvalExample>& dataset,
                                const EvalConfig& config);

}  // namespace trackforge
