#include "trackforge/diffusion.hpp"

#include <cmath>

namespace trackforge {

NoiseSchedule::NoiseSchedule(int s, double beta_start, double beta_end) : steps(s) {
  if (s < 1) throw ConfigError("noise schedule: steps must be positive");
  betas.resize(size_t(s));
  alpha_bars.resize(size_t(s));
  double prod = 1.0;
  for (int i = 0; i < s; ++i) {
    betas[size_t(i)] = s > 1 ? beta_start + (beta_end - beta_start) * i / double(s - 1)
                             : beta_start;
    prod *= 1.0 - betas[size_t(i)];
    alpha_bars[size_t(i)] = prod;
  }
}

double NoiseSchedule::alpha_bar(int tau) const {
  if (tau < 0 || tau > steps) throw DataError("alpha_bar: timestep out of range");
  return tau == 0 ? 1.0 : alpha_bars[size_t(tau - 1)];
}

double DDIMParams::sigma(const NoiseSchedule& sched, int tau, int tau_prev) const {
  double ab = sched.alpha_bar(tau);
  double ab_prev = sched.alpha_bar(tau_prev);
  if (ab_prev <= ab) return 0.0;
  return eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
}

Eigen::MatrixXd q_sample(const NoiseSchedule& sched, const Eigen::MatrixXd& z0, int tau,
                         const Eigen::MatrixXd& eps) {
  if (tau < 1 || tau > sched.steps) throw DataError("q_sample: timestep out of range");
  double ab = sched.alpha_bar(tau);
  return std::sqrt(ab) * z0 + std::sqrt(1.0 - ab) * eps;
}

Eigen::MatrixXd target_matrix(const DiffusionTarget& target) {
  Eigen::MatrixXd m(target.n, target.per_track_dim());
  for (int i = 0; i < target.n; ++i) {
    auto row = target.flatten_track(i);
    for (size_t j = 0; j < row.size(); ++j) m(i, Eigen::Index(j)) = row[j];
  }
  return m;
}

double training_loss(ModelParams& params, const DiffusionTarget& clean, const Conditioning& cond,
                     const Eigen::MatrixXd& features, const std::vector<uint8_t>& valid,
                     const NoiseSchedule& sched, std::mt19937_64& rng) {
  Eigen::MatrixXd z0 = target_matrix(clean);
  int n = int(z0.rows());
  long n_valid = 0;
  for (int i = 0; i < n; ++i)
    if (valid.empty() || valid[size_t(i)]) ++n_valid;
  if (n_valid == 0) throw DataError("training_loss: all tracks masked");

  std::uniform_int_distribution<int> tau_dist(1, sched.steps);
  int tau = tau_dist(rng);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd eps(z0.rows(), z0.cols());
  for (Eigen::Index i = 0; i < eps.rows(); ++i)
    for (Eigen::Index j = 0; j < eps.cols(); ++j) eps(i, j) = gauss(rng);

  Eigen::MatrixXd z_tau = q_sample(sched, z0, tau, eps);
  TokenBatch batch = build_tokens(params.config, z_tau, cond, features, tau, valid);
  ForwardCache cache;
  Eigen::MatrixXd pred = forward(params, batch, &cache);

  Eigen::MatrixXd diff = pred - z0;
  double denom = double(n_valid) * double(z0.cols());
  double loss = 0.0;
  Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(diff.rows(), diff.cols());
  for (int i = 0; i < n; ++i) {
    if (!valid.empty() && !valid[size_t(i)]) continue;
    loss += diff.row(i).array().abs().sum();
    upstream.row(i) = diff.row(i).array().sign().matrix() / denom;
  }
  backward(params, batch, cache, upstream);
  return loss / denom;
}

Eigen::MatrixXd ddim_chain(const Denoiser& denoiser, const NoiseSchedule& sched,
                           const DDIMParams& ddim, const Eigen::MatrixXd& z_init,
                           std::mt19937_64& rng) {
  if (ddim.n_steps < 1 || ddim.n_steps > sched.steps)
    throw ConfigError("ddim: n_steps must be in [1, schedule steps]");
  int stride = sched.steps / ddim.n_steps;
  std::normal_distribution<double> gauss(0.0, 1.0);

  Eigen::MatrixXd z = z_init;
  for (int tau = sched.steps; tau >= 1; tau -= stride) {
    int tau_prev = std::max(0, tau - stride);
    double ab = sched.alpha_bar(tau);
    double ab_prev = sched.alpha_bar(tau_prev);
    Eigen::MatrixXd z0_hat = denoiser(z, tau);
    Eigen::MatrixXd eps_hat = (z - std::sqrt(ab) * z0_hat) / std::sqrt(1.0 - ab);
    double sig = ddim.sigma(sched, tau, tau_prev);
    double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sig * sig));
    z = std::sqrt(ab_prev) * z0_hat + dir * eps_hat;
    if (sig > 0.0) {
      Eigen::MatrixXd noise(z.rows(), z.cols());
      for (Eigen::Index i = 0; i < noise.rows(); ++i)
        for (Eigen::Index j = 0; j < noise.cols(); ++j) noise(i, j) = gauss(rng);
      z += sig * noise;
    }
    if (!z.allFinite())
      throw NumericError("ddim_chain: non-finite state at timestep " + std::to_string(tau));
  }
  return z;
}

Denoiser model_denoiser(const ModelParams& params, const Conditioning& cond,
                        const Eigen::MatrixXd& features) {
  return [&params, cond, features](const Eigen::MatrixXd& z_tau, int tau) {
    TokenBatch batch = build_tokens(params.config, z_tau, cond, features, tau);
    return forward(params, batch);
  };
}

TrackSet ddim_sample(const ModelParams& params_ema, const Conditioning& cond,
                     const Eigen::MatrixXd& features, const NoiseSchedule& sched,
                     const DDIMParams& ddim, uint64_t seed) {
  const NetConfig& cfg = params_ema.config;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd z_init(cond.n, cfg.target_dim());
  for (Eigen::Index i = 0; i < z_init.rows(); ++i)
    for (Eigen::Index j = 0; j < z_init.cols(); ++j) z_init(i, j) = gauss(rng);

  Eigen::MatrixXd z0 = ddim_chain(model_denoiser(params_ema, cond, features), sched, ddim,
                                  z_init, rng);

  DiffusionTarget target;
  target.n = cond.n;
  target.t = cfg.horizon;
  target.scale_v = cfg.scale_v;
  target.scale_o = cfg.scale_o;
  target.scaled_velocities.resize(size_t(cond.n) * (cfg.horizon - 1) * 2);
  target.scaled_occlusion.resize(size_t(cond.n) * cfg.horizon);
  for (int i = 0; i < cond.n; ++i) {
    for (int j = 0; j < (cfg.horizon - 1) * 2; ++j)
      target.scaled_velocities[size_t(i) * (cfg.horizon - 1) * 2 + size_t(j)] = z0(i, j);
    for (int s = 0; s < cfg.horizon; ++s)
      target.scaled_occlusion[size_t(i) * cfg.horizon + size_t(s)] =
          z0(i, (cfg.horizon - 1) * 2 + s);
  }
  return decode_target(target, cond.start_points, cfg.t_cond);
}

void ema_update(ModelParams& ema, const ModelParams& params, double decay) {
  std::vector<Tensor*> dst;
  std::vector<const Tensor*> src;
  ema.for_each_tensor([&](Tensor& t) { dst.push_back(&t); });
  params.for_each_tensor([&](const Tensor& t) { src.push_back(&t); });
  for (size_t k = 0; k < dst.size(); ++k)
    dst[k]->value = decay * dst[k]->value + (1.0 - decay) * src[k]->value;
}

}  // namespace trackforge
