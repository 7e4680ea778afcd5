#include <cmath>
#include <random>

#include "doctest.h"
#include "trackforge/diffusion.hpp"

using namespace trackforge;

namespace {

NetConfig tiny_config() {
  NetConfig cfg;
  cfg.depth = 1;
  cfg.width = 16;
  cfg.heads = 2;
  cfg.feature_dim = 4;
  cfg.t_cond = 3;
  cfg.horizon = 6;
  cfg.hist_embed_dim = 4;
  return cfg;
}

struct TinyProblem {
  DiffusionTarget clean;
  Conditioning cond;
  Eigen::MatrixXd features;
};

TinyProblem tiny_problem(const NetConfig& cfg, int n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 0.02);
  TrackSet ts;
  ts.resize(n, cfg.horizon);
  ts.t_cond = cfg.t_cond;
  for (int i = 0; i < n; ++i) {
    double x = u(rng), y = u(rng);
    for (int s = 0; s < cfg.horizon; ++s) {
      ts.x(i, s) = x;
      ts.y(i, s) = y;
      x += g(rng);
      y += g(rng);
    }
  }
  TinyProblem p;
  p.clean = encode_target(ts, cfg.scale_v, cfg.scale_o);
  p.cond = make_conditioning(ts);
  p.features = Eigen::MatrixXd::Zero(n, cfg.feature_dim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < cfg.feature_dim; ++j) p.features(i, j) = u(rng);
  return p;
}

}  // namespace

TEST_CASE("noise schedule endpoints and monotonicity") {
  NoiseSchedule sched;
  REQUIRE(sched.steps == 1000);
  CHECK(sched.betas.front() == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(sched.betas.back() == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(sched.alpha_bar(0) == 1.0);
  for (int tau = 1; tau <= sched.steps; ++tau) {
    CHECK(sched.alpha_bar(tau) < sched.alpha_bar(tau - 1));
    CHECK(sched.alpha_bar(tau) > 0.0);
  }
  // Nearly pure noise by the final step.
  CHECK(sched.alpha_bar(sched.steps) < 0.01);
  CHECK_THROWS_AS(sched.alpha_bar(-1), DataError);
  CHECK_THROWS_AS(sched.alpha_bar(1001), DataError);
}

TEST_CASE("q_sample matches its closed-form moments by Monte Carlo") {
  NoiseSchedule sched;
  Eigen::MatrixXd z0 = Eigen::MatrixXd::Constant(1, 1, 0.8);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int tau : {1, 500, 1000}) {
    const int n = 20000;
    double sum = 0.0, sumsq = 0.0;
    for (int k = 0; k < n; ++k) {
      Eigen::MatrixXd eps = Eigen::MatrixXd::Constant(1, 1, g(rng));
      double z = q_sample(sched, z0, tau, eps)(0, 0);
      sum += z;
      sumsq += z * z;
    }
    double ab = sched.alpha_bar(tau);
    double mean = sum / n;
    double var = sumsq / n - mean * mean;
    double true_var = 1.0 - ab;
    double se_mean = std::sqrt(true_var / n);
    double se_var = true_var * std::sqrt(2.0 / (n - 1));
    CHECK(std::abs(mean - std::sqrt(ab) * 0.8) < 4.0 * se_mean + 1e-12);
    CHECK(std::abs(var - true_var) < 4.0 * se_var + 1e-12);
  }
}

TEST_CASE("q_sample rejects out-of-range timesteps") {
  NoiseSchedule sched;
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(1, 1);
  CHECK_THROWS_AS(q_sample(sched, z, 0, z), DataError);
  CHECK_THROWS_AS(q_sample(sched, z, 1001, z), DataError);
}

TEST_CASE("eta=1 stride-1 sigma equals the DDPM ancestral scale") {
  NoiseSchedule sched;
  DDIMParams ddim;
  ddim.eta = 1.0;
  for (int tau : {2, 500, 1000}) {
    double ab = sched.alpha_bar(tau);
    double ab_prev = sched.alpha_bar(tau - 1);
    double beta = sched.betas[size_t(tau - 1)];
    double ancestral = std::sqrt((1.0 - ab_prev) / (1.0 - ab) * beta);
    CHECK(ddim.sigma(sched, tau, tau - 1) == doctest::Approx(ancestral).epsilon(1e-12));
  }
  DDIMParams det;
  det.eta = 0.0;
  CHECK(det.sigma(sched, 500, 490) == 0.0);
}

TEST_CASE("DDIM with a perfect denoiser recovers the clean target") {
  NoiseSchedule sched;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd z0(2, 5);
  Eigen::MatrixXd z_init(2, 5);
  for (Eigen::Index i = 0; i < 2; ++i)
    for (Eigen::Index j = 0; j < 5; ++j) {
      z0(i, j) = g(rng);
      z_init(i, j) = g(rng);
    }
  Denoiser oracle = [&](const Eigen::MatrixXd&, int) { return z0; };
  for (int n_steps : {1, 10, 100, 1000}) {
    DDIMParams ddim;
    ddim.n_steps = n_steps;
    ddim.eta = 0.0;
    Eigen::MatrixXd out = ddim_chain(oracle, sched, ddim, z_init, rng);
    CHECK((out - z0).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("DDIM chain is deterministic at eta=0 and validates n_steps") {
  NoiseSchedule sched;
  std::mt19937_64 rng_a(1), rng_b(2);
  Eigen::MatrixXd z_init = Eigen::MatrixXd::Random(3, 4);
  Denoiser shrink = [](const Eigen::MatrixXd& z, int) { return (0.5 * z).eval(); };
  DDIMParams ddim;
  ddim.n_steps = 50;
  Eigen::MatrixXd a = ddim_chain(shrink, sched, ddim, z_init, rng_a);
  Eigen::MatrixXd b = ddim_chain(shrink, sched, ddim, z_init, rng_b);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);

  DDIMParams bad;
  bad.n_steps = 0;
  CHECK_THROWS_AS(ddim_chain(shrink, sched, bad, z_init, rng_a), ConfigError);
  bad.n_steps = sched.steps + 1;
  CHECK_THROWS_AS(ddim_chain(shrink, sched, bad, z_init, rng_a), ConfigError);
}

TEST_CASE("ddim_chain flags non-finite states with the failing timestep") {
  NoiseSchedule sched;
  std::mt19937_64 rng(3);
  Eigen::MatrixXd z_init = Eigen::MatrixXd::Ones(1, 2);
  Denoiser blowup = [](const Eigen::MatrixXd& z, int) {
    return (z * std::numeric_limits<double>::quiet_NaN()).eval();
  };
  DDIMParams ddim;
  ddim.n_steps = 10;
  CHECK_THROWS_AS(ddim_chain(blowup, sched, ddim, z_init, rng), NumericError);
}

TEST_CASE("target_matrix rows agree with flatten_track") {
  NetConfig cfg = tiny_config();
  TinyProblem p = tiny_problem(cfg, 3, 21);
  Eigen::MatrixXd m = target_matrix(p.clean);
  REQUIRE(m.rows() == 3);
  REQUIRE(m.cols() == Eigen::Index(p.clean.per_track_dim()));
  for (int i = 0; i < 3; ++i) {
    auto row = p.clean.flatten_track(i);
    for (size_t j = 0; j < row.size(); ++j) CHECK(m(i, Eigen::Index(j)) == row[j]);
  }
}

TEST_CASE("training_loss is finite, accumulates gradients, and is seed-deterministic") {
  NetConfig cfg = tiny_config();
  TinyProblem p = tiny_problem(cfg, 4, 33);
  NoiseSchedule sched;
  ModelParams params = init_params(cfg, 11);

  std::mt19937_64 rng_a(77), rng_b(77);
  params.zero_grad();
  double la = training_loss(params, p.clean, p.cond, p.features, {}, sched, rng_a);
  double grad_norm_sq = 0.0;
  params.for_each_tensor([&](const Tensor& t) { grad_norm_sq += t.grad.squaredNorm(); });
  CHECK(std::isfinite(la));
  CHECK(la > 0.0);
  CHECK(grad_norm_sq > 0.0);

  ModelParams params_b = init_params(cfg, 11);
  double lb = training_loss(params_b, p.clean, p.cond, p.features, {}, sched, rng_b);
  CHECK(la == lb);
}

TEST_CASE("training_loss ignores padded rows and rejects empty batches") {
  NetConfig cfg = tiny_config();
  TinyProblem p = tiny_problem(cfg, 3, 41);
  NoiseSchedule sched;
  ModelParams params = init_params(cfg, 13);

  // Zero out the padded track; its contents must not move the loss.
  std::vector<uint8_t> valid = {1, 1, 0};
  std::mt19937_64 rng_a(5), rng_b(5);
  double la = training_loss(params, p.clean, p.cond, p.features, valid, sched, rng_a);
  TinyProblem q = p;
  for (int s = 0; s < q.clean.t; ++s) q.clean.scaled_occlusion[size_t(2) * q.clean.t + s] = 0.33;
  ModelParams params_b = init_params(cfg, 13);
  double lb = training_loss(params_b, q.clean, q.cond, q.features, valid, sched, rng_b);
  CHECK(la == lb);

  std::vector<uint8_t> none = {0, 0, 0};
  std::mt19937_64 rng_c(5);
  CHECK_THROWS_AS(training_loss(params, p.clean, p.cond, p.features, none, sched, rng_c),
                  DataError);
}

TEST_CASE("ddim_sample is deterministic in the seed and decodes to the right shape") {
  NetConfig cfg = tiny_config();
  TinyProblem p = tiny_problem(cfg, 3, 55);
  NoiseSchedule sched;
  DDIMParams ddim;
  ddim.n_steps = 5;
  ModelParams params = init_params(cfg, 17);

  TrackSet a = ddim_sample(params, p.cond, p.features, sched, ddim, 1234);
  TrackSet b = ddim_sample(params, p.cond, p.features, sched, ddim, 1234);
  TrackSet c = ddim_sample(params, p.cond, p.features, sched, ddim, 1235);
  CHECK(a.n == 3);
  CHECK(a.t == cfg.horizon);
  CHECK(a.t_cond == cfg.t_cond);
  CHECK(a.positions == b.positions);
  CHECK(a.visibility == b.visibility);
  CHECK(a.positions != c.positions);
  // Sampling anchors each track at its conditioning start point.
  for (int i = 0; i < 3; ++i) {
    CHECK(a.x(i, 0) == doctest::Approx(p.cond.start_points[size_t(i) * 2]));
    CHECK(a.y(i, 0) == doctest::Approx(p.cond.start_points[size_t(i) * 2 + 1]));
  }
}

TEST_CASE("EMA follows the geometric averaging law") {
  NetConfig cfg = tiny_config();
  ModelParams ema = init_params(cfg, 3);
  ModelParams target = init_params(cfg, 4);
  double w0 = ema.w_in.value(0, 0);
  double wt = target.w_in.value(0, 0);
  const double decay = 0.9;
  const int k = 7;
  for (int i = 0; i < k; ++i) ema_update(ema, target, decay);
  double expect = std::pow(decay, k) * w0 + (1.0 - std::pow(decay, k)) * wt;
  CHECK(ema.w_in.value(0, 0) == doctest::Approx(expect).epsilon(1e-12));
}
