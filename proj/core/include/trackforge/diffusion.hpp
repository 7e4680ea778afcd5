#pragma once

#include <functional>
#include <random>

#include "trackforge/net.hpp"

namespace trackforge {

// Linear noise schedule: beta_1 = 1e-4 ... beta_S = 0.02, with the cumulative
// products alpha_bar used by both corruption and sampling. alpha_bar(0) = 1,
// so the final sampling step returns the denoiser's clean estimate exactly.
struct NoiseSchedule {
  int steps = 1000;
  std::vector<double> betas;       // [steps]
  std::vector<double> alpha_bars;  // [steps], cumulative product of 1 - beta

  explicit NoiseSchedule(int s = 1000, double beta_start = 1e-4, double beta_end = 0.02);
  double alpha_bar(int tau) const;  // tau in [0, steps]
};

struct DDIMParams {
  int n_steps = 100;
  double eta = 0.0;

  // sigma_tau = eta * sqrt((1-ab_prev)/(1-ab)) * sqrt(1 - ab/ab_prev)
  double sigma(const NoiseSchedule& sched, int tau, int tau_prev) const;
};

// z_tau = sqrt(ab_tau) z0 + sqrt(1 - ab_tau) eps, elementwise over [N, D].
Eigen::MatrixXd q_sample(const NoiseSchedule& sched, const Eigen::MatrixXd& z0, int tau,
                         const Eigen::MatrixXd& eps);

// Flattened per-track target rows (velocities then occlusion), [N, D].
Eigen::MatrixXd target_matrix(const DiffusionTarget& target);

// One training step's loss: draw tau and noise, corrupt, predict, take the
// mean absolute error over valid tracks' channels, and accumulate gradients.
double training_loss(ModelParams& params, const DiffusionTarget& clean, const Conditioning& cond,
                     const Eigen::MatrixXd& features, const std::vector<uint8_t>& valid,
                     const NoiseSchedule& sched, std::mt19937_64& rng);

// Maps a noisy target and its timestep to a clean estimate [N, D].
using Denoiser = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& z_tau, int tau)>;

// DDIM chain over the stride-spaced timestep subsequence, returning the
// final clean estimate. Deterministic when eta = 0.
Eigen::MatrixXd ddim_chain(const Denoiser& denoiser, const NoiseSchedule& sched,
                           const DDIMParams& ddim, const Eigen::MatrixXd& z_init,
                           std::mt19937_64& rng);

Denoiser model_denoiser(const ModelParams& params, const Conditioning& cond,
                        const Eigen::MatrixXd& features);

// Full sampler: noise -> DDIM -> decoded track set in the input coordinate
// frame, using the conditioning start points for the cumulative sum.
TrackSet ddim_sample(const ModelParams& params_ema, const Conditioning& cond,
                     const Eigen::MatrixXd& features, const NoiseSchedule& sched,
                     const DDIMParams& ddim, uint64_t seed);

void ema_update(ModelParams& ema, const ModelParams& params, double decay = 0.9997);

}  // namespace trackforge
