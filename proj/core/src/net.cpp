#include "trackforge/net.hpp"

#include <cmath>
#include <random>

namespace trackforge {

namespace {

constexpr double kLnEps = 1e-6;
constexpr double kMaskScore = -1e30;

Eigen::ArrayXXd gelu(const Eigen::ArrayXXd& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); });
}

Eigen::ArrayXXd gelu_grad(const Eigen::ArrayXXd& x) {
  return x.unaryExpr([](double v) {
    return 0.5 * (1.0 + std::erf(v / std::sqrt(2.0))) +
           v * std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
  });
}

Eigen::ArrayXd silu(const Eigen::ArrayXd& x) { return x / (1.0 + (-x).exp()); }

Eigen::ArrayXd silu_grad(const Eigen::ArrayXd& x) {
  Eigen::ArrayXd s = 1.0 / (1.0 + (-x).exp());
  return s * (1.0 + x * (1.0 - s));
}

// y = x * w^T + b^T broadcast over rows.
Eigen::MatrixXd linear(const Eigen::MatrixXd& x, const Tensor& w, const Tensor& b) {
  Eigen::MatrixXd y = x * w.value.transpose();
  y.rowwise() += b.value.col(0).transpose();
  return y;
}

// Accumulates gradients of the linear op and returns dx.
Eigen::MatrixXd linear_backward(const Eigen::MatrixXd& x, Tensor& w, Tensor& b,
                                const Eigen::MatrixXd& dy) {
  w.grad += dy.transpose() * x;
  b.grad.col(0) += dy.colwise().sum().transpose();
  return dy * w.value;
}

// Per-row layer norm without learned affine; outputs y and the stats needed
// for the backward pass.
Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, Eigen::VectorXd& mu, Eigen::VectorXd& istd) {
  mu = x.rowwise().mean();
  Eigen::MatrixXd xc = x.colwise() - mu;
  Eigen::ArrayXd var = xc.array().square().rowwise().mean();
  istd = (var + kLnEps).sqrt().inverse().matrix();
  return xc.array().colwise() * istd.array();
}

Eigen::MatrixXd layer_norm_backward(const Eigen::MatrixXd& y, const Eigen::VectorXd& istd,
                                    const Eigen::MatrixXd& dy) {
  Eigen::ArrayXd mean_dy = dy.rowwise().mean().array();
  Eigen::ArrayXd mean_dyy = (dy.array() * y.array()).rowwise().mean();
  Eigen::ArrayXXd dx = dy.array();
  dx.colwise() -= mean_dy;
  dx -= y.array().colwise() * mean_dyy;
  return (dx.colwise() * istd.array()).matrix();
}

// y = x .* (1 + scale) + shift, scale/shift broadcast over rows.
Eigen::MatrixXd modulate(const Eigen::MatrixXd& x, const Eigen::VectorXd& shift,
                         const Eigen::VectorXd& scale) {
  Eigen::MatrixXd y =
      (x.array().rowwise() * (1.0 + scale.transpose().array())).matrix();
  y.rowwise() += shift.transpose();
  return y;
}

void require(bool ok, const char* msg) {
  if (!ok) throw DataError(msg);
}

double trunc_normal(std::mt19937_64& rng, std::normal_distribution<double>& dist, double std) {
  double z;
  do {
    z = dist(rng);
  } while (std::abs(z) > 2.0);
  return z * std;
}

}  // namespace

void NetConfig::validate() const {
  if (depth < 0 || width <= 0 || heads <= 0 || width % heads != 0 || width % 4 != 0)
    throw ConfigError("net config: width must be positive, divisible by heads and by 4");
  if (feature_dim <= 0 || t_cond < 2 || horizon <= t_cond || hist_embed_dim <= 0 ||
      hist_embed_dim % 2 != 0)
    throw ConfigError("net config: invalid dimensions");
  if (scale_v <= 0 || scale_o <= 0) throw ConfigError("net config: scales must be positive");
}

void ModelParams::for_each_tensor(const std::function<void(Tensor&)>& fn) {
  fn(w_in);
  fn(b_in);
  fn(w_tau);
  fn(b_tau);
  fn(w_d);
  for (auto& blk : blocks) {
    fn(blk.w_qkv);
    fn(blk.b_qkv);
    fn(blk.w_attn);
    fn(blk.b_attn);
    fn(blk.w_mlp1);
    fn(blk.b_mlp1);
    fn(blk.w_mlp2);
    fn(blk.b_mlp2);
    fn(blk.w_mod);
    fn(blk.b_mod);
  }
  fn(w_out);
  fn(b_out);
}

void ModelParams::for_each_tensor(const std::function<void(const Tensor&)>& fn) const {
  const_cast<ModelParams*>(this)->for_each_tensor(
      [&](Tensor& t) { fn(const_cast<const Tensor&>(t)); });
}

void ModelParams::zero_grad() {
  for_each_tensor([](Tensor& t) { t.grad.setZero(); });
}

size_t ModelParams::param_count() const {
  size_t n = 0;
  for_each_tensor([&](const Tensor& t) { n += size_t(t.value.size()); });
  return n;
}

ModelParams init_params(const NetConfig& config, uint64_t seed) {
  config.validate();
  ModelParams p;
  p.config = config;
  int w = config.width;
  p.w_in = Tensor("w_in", w, config.token_dim());
  p.b_in = Tensor("b_in", w, 1);
  p.w_tau = Tensor("w_tau", w, w);
  p.b_tau = Tensor("b_tau", w, 1);
  p.w_d = Tensor("w_d", w, 2);
  p.blocks.resize(size_t(config.depth));
  for (int b = 0; b < config.depth; ++b) {
    std::string prefix = "block" + std::to_string(b) + ".";
    auto& blk = p.blocks[size_t(b)];
    blk.w_qkv = Tensor(prefix + "w_qkv", 3 * w, w);
    blk.b_qkv = Tensor(prefix + "b_qkv", 3 * w, 1);
    blk.w_attn = Tensor(prefix + "w_attn", w, w);
    blk.b_attn = Tensor(prefix + "b_attn", w, 1);
    blk.w_mlp1 = Tensor(prefix + "w_mlp1", 4 * w, w);
    blk.b_mlp1 = Tensor(prefix + "b_mlp1", 4 * w, 1);
    blk.w_mlp2 = Tensor(prefix + "w_mlp2", w, 4 * w);
    blk.b_mlp2 = Tensor(prefix + "b_mlp2", w, 1);
    blk.w_mod = Tensor(prefix + "w_mod", 6 * w, w);
    blk.b_mod = Tensor(prefix + "b_mod", 6 * w, 1);
  }
  p.w_out = Tensor("w_out", config.target_dim(), w);
  p.b_out = Tensor("b_out", config.target_dim(), 1);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  p.for_each_tensor([&](Tensor& t) {
    bool is_bias = t.value.cols() == 1;
    bool is_mod = t.name.find("w_mod") != std::string::npos ||
                  t.name.find("b_mod") != std::string::npos;
    if (is_bias || is_mod) return;  // already zero
    double std = 1.0 / std::sqrt(double(t.value.cols()));
    for (Eigen::Index i = 0; i < t.value.rows(); ++i)
      for (Eigen::Index j = 0; j < t.value.cols(); ++j)
        t.value(i, j) = trunc_normal(rng, dist, std);
  });
  return p;
}

TokenBatch build_tokens(const NetConfig& config, const Eigen::MatrixXd& target_noisy,
                        const Conditioning& cond, const Eigen::MatrixXd& features, int tau,
                        const std::vector<uint8_t>& valid) {
  config.validate();
  int n = cond.n;
  require(target_noisy.rows() == n && target_noisy.cols() == config.target_dim(),
          "build_tokens: noisy target shape mismatch");
  require(features.rows() == n && features.cols() == config.feature_dim,
          "build_tokens: feature shape mismatch");
  require(cond.t_cond == config.t_cond, "build_tokens: conditioning length mismatch");
  require(valid.empty() || int(valid.size()) == n, "build_tokens: mask length mismatch");
  require(int(cond.start_points.size()) == 2 * n, "build_tokens: start point shape mismatch");
  if (cond.has_displacement)
    require(std::isfinite(cond.displacement[0]) && std::isfinite(cond.displacement[1]),
            "build_tokens: displacement must be finite");

  TokenBatch batch;
  batch.tokens = Eigen::MatrixXd::Zero(n, config.token_dim());
  batch.posenc = Eigen::MatrixXd::Zero(n, config.width);
  batch.mask = Eigen::VectorXd::Ones(n);
  for (int i = 0; i < n && !valid.empty(); ++i) batch.mask(i) = valid[size_t(i)] ? 1.0 : 0.0;

  int hist_steps = config.t_cond - 1;
  int he = config.hist_embed_dim;
  for (int i = 0; i < n; ++i) {
    int col = 0;
    for (int c = 0; c < config.feature_dim; ++c) batch.tokens(i, col++) = features(i, c);
    if (cond.history_present) {
      for (int s = 0; s < hist_steps; ++s) {
        for (int a = 0; a < 2; ++a) {
          double v = cond.history_velocities[(size_t(i) * hist_steps + s) * 2 + size_t(a)];
          auto emb = sinusoidal_embed(config.scale_v * v, he);
          for (double e : emb) batch.tokens(i, col++) = e;
        }
      }
      for (int s = 0; s < config.t_cond; ++s)
        batch.tokens(i, col++) =
            config.scale_o * cond.history_visibility[size_t(i) * config.t_cond + size_t(s)];
    } else {
      col += hist_steps * 2 * he + config.t_cond;
    }
    for (int j = 0; j < config.target_dim(); ++j) batch.tokens(i, col++) = target_noisy(i, j);

    auto ex = sinusoidal_embed(cond.start_points[size_t(i) * 2], config.width / 2);
    auto ey = sinusoidal_embed(cond.start_points[size_t(i) * 2 + 1], config.width / 2);
    for (int j = 0; j < config.width / 2; ++j) {
      batch.posenc(i, j) = ex[size_t(j)];
      batch.posenc(i, config.width / 2 + j) = ey[size_t(j)];
    }
  }

  auto te = sinusoidal_embed(double(tau), config.width);
  batch.tau_embed = Eigen::Map<const Eigen::VectorXd>(te.data(), config.width);
  batch.has_d = cond.has_displacement;
  if (batch.has_d) batch.d = Eigen::Vector2d(cond.displacement[0], cond.displacement[1]);
  return batch;
}

Eigen::MatrixXd forward(const ModelParams& params, const TokenBatch& batch, ForwardCache* cache) {
  const NetConfig& cfg = params.config;
  int n = int(batch.tokens.rows());
  require(n > 0, "forward: empty batch");
  require(batch.tokens.cols() == cfg.token_dim(), "forward: token width mismatch");
  int w = cfg.width;
  int heads = cfg.heads;
  int dh = w / heads;
  double inv_sqrt_dh = 1.0 / std::sqrt(double(dh));

  ForwardCache local;
  ForwardCache& fc = cache ? *cache : local;
  fc = ForwardCache{};
  fc.blocks.resize(size_t(cfg.depth));

  Eigen::MatrixXd x = linear(batch.tokens, params.w_in, params.b_in) + batch.posenc;
  fc.x0 = x;

  Eigen::VectorXd c = params.w_tau.value * batch.tau_embed + params.b_tau.value.col(0);
  if (batch.has_d) c += params.w_d.value * batch.d;
  fc.cond_pre = c;
  fc.cond_act = silu(c.array()).matrix();

  for (int b = 0; b < cfg.depth; ++b) {
    const auto& blk = params.blocks[size_t(b)];
    auto& bc = fc.blocks[size_t(b)];
    bc.x_in = x;
    bc.mod = blk.w_mod.value * fc.cond_act + blk.b_mod.value.col(0);
    Eigen::VectorXd shift1 = bc.mod.segment(0, w), scale1 = bc.mod.segment(w, w),
                    gate1 = bc.mod.segment(2 * w, w), shift2 = bc.mod.segment(3 * w, w),
                    scale2 = bc.mod.segment(4 * w, w), gate2 = bc.mod.segment(5 * w, w);

    bc.ln1 = layer_norm(x, bc.mu1, bc.istd1);
    bc.mod1 = modulate(bc.ln1, shift1, scale1);

    Eigen::MatrixXd qkv = linear(bc.mod1, blk.w_qkv, blk.b_qkv);
    bc.q = qkv.leftCols(w);
    bc.k = qkv.middleCols(w, w);
    bc.v = qkv.rightCols(w);

    bc.attn_prob.resize(size_t(heads));
    bc.attn_cat = Eigen::MatrixXd(n, w);
    for (int h = 0; h < heads; ++h) {
      Eigen::MatrixXd s =
          bc.q.middleCols(h * dh, dh) * bc.k.middleCols(h * dh, dh).transpose() * inv_sqrt_dh;
      for (int j = 0; j < n; ++j)
        if (batch.mask(j) == 0.0) s.col(j).setConstant(kMaskScore);
      Eigen::VectorXd row_max = s.rowwise().maxCoeff();
      Eigen::ArrayXXd e = (s.colwise() - row_max).array().exp();
      Eigen::ArrayXd z = e.rowwise().sum();
      bc.attn_prob[size_t(h)] = (e.colwise() / z).matrix();
      bc.attn_cat.middleCols(h * dh, dh) = bc.attn_prob[size_t(h)] * bc.v.middleCols(h * dh, dh);
    }
    bc.attn_out = linear(bc.attn_cat, blk.w_attn, blk.b_attn);
    bc.h = x + (bc.attn_out.array().rowwise() * gate1.transpose().array()).matrix();

    bc.ln2 = layer_norm(bc.h, bc.mu2, bc.istd2);
    bc.mod2 = modulate(bc.ln2, shift2, scale2);
    bc.mlp_pre = linear(bc.mod2, blk.w_mlp1, blk.b_mlp1);
    bc.mlp_act = gelu(bc.mlp_pre.array()).matrix();
    bc.mlp_out = linear(bc.mlp_act, blk.w_mlp2, blk.b_mlp2);
    x = bc.h + (bc.mlp_out.array().rowwise() * gate2.transpose().array()).matrix();
  }

  fc.x_final = x;
  Eigen::MatrixXd out = linear(x, params.w_out, params.b_out);
  if (!out.allFinite())
    throw NumericError("forward: non-finite activations in prediction head output");
  fc.valid = true;
  return out;
}

Eigen::MatrixXd backward(ModelParams& params, const TokenBatch& batch, const ForwardCache& cache,
                         const Eigen::MatrixXd& upstream) {
  if (!cache.valid) throw DataError("backward: forward cache missing");
  const NetConfig& cfg = params.config;
  int n = int(batch.tokens.rows());
  int w = cfg.width;
  int heads = cfg.heads;
  int dh = w / heads;
  double inv_sqrt_dh = 1.0 / std::sqrt(double(dh));
  require(upstream.rows() == n && upstream.cols() == cfg.target_dim(),
          "backward: upstream shape mismatch");

  Eigen::MatrixXd dx = linear_backward(cache.x_final, params.w_out, params.b_out, upstream);
  Eigen::VectorXd dcond_act = Eigen::VectorXd::Zero(w);

  for (int b = cfg.depth - 1; b >= 0; --b) {
    auto& blk = params.blocks[size_t(b)];
    const auto& bc = cache.blocks[size_t(b)];
    Eigen::VectorXd shift1 = bc.mod.segment(0, w), scale1 = bc.mod.segment(w, w),
                    gate1 = bc.mod.segment(2 * w, w), scale2 = bc.mod.segment(4 * w, w),
                    gate2 = bc.mod.segment(5 * w, w);
    (void)shift1;

    // x_out = h + gate2 .* mlp_out
    Eigen::MatrixXd dh_total = dx;
    Eigen::MatrixXd dmlp_out = (dx.array().rowwise() * gate2.transpose().array()).matrix();
    Eigen::VectorXd dgate2 = (dx.array() * bc.mlp_out.array()).colwise().sum().transpose();

    Eigen::MatrixXd dmlp_act = linear_backward(bc.mlp_act, blk.w_mlp2, blk.b_mlp2, dmlp_out);
    Eigen::MatrixXd dmlp_pre = (dmlp_act.array() * gelu_grad(bc.mlp_pre.array())).matrix();
    Eigen::MatrixXd dmod2 = linear_backward(bc.mod2, blk.w_mlp1, blk.b_mlp1, dmlp_pre);

    Eigen::VectorXd dshift2 = dmod2.colwise().sum().transpose();
    Eigen::VectorXd dscale2 = (dmod2.array() * bc.ln2.array()).colwise().sum().transpose();
    Eigen::MatrixXd dln2 = (dmod2.array().rowwise() * (1.0 + scale2.transpose().array())).matrix();
    dh_total += layer_norm_backward(bc.ln2, bc.istd2, dln2);

    // h = x_in + gate1 .* attn_out
    Eigen::MatrixXd dx_in = dh_total;
    Eigen::MatrixXd dattn_out =
        (dh_total.array().rowwise() * gate1.transpose().array()).matrix();
    Eigen::VectorXd dgate1 =
        (dh_total.array() * bc.attn_out.array()).colwise().sum().transpose();

    Eigen::MatrixXd dattn_cat = linear_backward(bc.attn_cat, blk.w_attn, blk.b_attn, dattn_out);
    Eigen::MatrixXd dq(n, w), dk(n, w), dv(n, w);
    for (int h = 0; h < heads; ++h) {
      const Eigen::MatrixXd& p = bc.attn_prob[size_t(h)];
      Eigen::MatrixXd da = dattn_cat.middleCols(h * dh, dh);
      Eigen::MatrixXd dp = da * bc.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh) = p.transpose() * da;
      Eigen::ArrayXd row_dot = (dp.array() * p.array()).rowwise().sum();
      Eigen::MatrixXd ds = (p.array() * (dp.array().colwise() - row_dot)).matrix();
      dq.middleCols(h * dh, dh) = ds * bc.k.middleCols(h * dh, dh) * inv_sqrt_dh;
      dk.middleCols(h * dh, dh) = ds.transpose() * bc.q.middleCols(h * dh, dh) * inv_sqrt_dh;
    }
    Eigen::MatrixXd dqkv(n, 3 * w);
    dqkv << dq, dk, dv;
    Eigen::MatrixXd dmod1 = linear_backward(bc.mod1, blk.w_qkv, blk.b_qkv, dqkv);

    Eigen::VectorXd dshift1 = dmod1.colwise().sum().transpose();
    Eigen::VectorXd dscale1 = (dmod1.array() * bc.ln1.array()).colwise().sum().transpose();
    Eigen::MatrixXd dln1 = (dmod1.array().rowwise() * (1.0 + scale1.transpose().array())).matrix();
    dx_in += layer_norm_backward(bc.ln1, bc.istd1, dln1);
    dx = dx_in;

    Eigen::VectorXd dmod(6 * w);
    dmod << dshift1, dscale1, dgate1, dshift2, dscale2, dgate2;
    blk.w_mod.grad += dmod * cache.cond_act.transpose();
    blk.b_mod.grad.col(0) += dmod;
    dcond_act += blk.w_mod.value.transpose() * dmod;
  }

  Eigen::VectorXd dc = (dcond_act.array() * silu_grad(cache.cond_pre.array())).matrix();
  params.w_tau.grad += dc * batch.tau_embed.transpose();
  params.b_tau.grad.col(0) += dc;
  if (batch.has_d) params.w_d.grad += dc * batch.d.transpose();

  return linear_backward(batch.tokens, params.w_in, params.b_in, dx);
}

}  // namespace trackforge
