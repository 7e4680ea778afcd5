#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "trackforge/embed.hpp"
#include "trackforge/trackset.hpp"

namespace trackforge {

struct NetConfig {
  int depth = 4;         // transformer block count
  int width = 128;       // hidden dimension
  int heads = 4;         // attention heads (width % heads == 0)
  int feature_dim = 16;  // per-track appearance feature channels
  int t_cond = 4;        // conditioning frames
  int horizon = 32;      // full trajectory length T
  int hist_embed_dim = 8;  // sinusoidal dim per history velocity component
  double scale_v = 12.0;
  double scale_o = 0.1;

  // Pre-projection token width: features, embedded velocity history,
  // occlusion history, noisy velocities, noisy occlusions.
  int token_dim() const {
    return feature_dim + (t_cond - 1) * 2 * hist_embed_dim + t_cond + (horizon - 1) * 2 + horizon;
  }
  int target_dim() const { return (horizon - 1) * 2 + horizon; }
  void validate() const;
};

// Per-track tokens plus the global conditioning inputs. The learned linear
// embeddings of tau and d live in ModelParams; the batch carries the raw
// sinusoidal lift of tau and the displacement vector.
struct TokenBatch {
  Eigen::MatrixXd tokens;     // [N, token_dim]
  Eigen::MatrixXd posenc;     // [N, width], from initial locations
  Eigen::VectorXd mask;       // [N], 1 = valid track, 0 = padding
  Eigen::VectorXd tau_embed;  // [width], sinusoidal lift of the timestep
  Eigen::Vector2d d = Eigen::Vector2d::Zero();
  bool has_d = false;
};

struct Tensor {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;

  Tensor() = default;
  Tensor(std::string n, int rows, int cols)
      : name(std::move(n)),
        value(Eigen::MatrixXd::Zero(rows, cols)),
        grad(Eigen::MatrixXd::Zero(rows, cols)) {}
};

struct BlockParams {
  Tensor w_qkv, b_qkv;    // [3W, W], [3W, 1]
  Tensor w_attn, b_attn;  // output projection [W, W], [W, 1]
  Tensor w_mlp1, b_mlp1;  // [4W, W], [4W, 1]
  Tensor w_mlp2, b_mlp2;  // [W, 4W], [W, 1]
  Tensor w_mod, b_mod;    // adaLN modulation [6W, W], [6W, 1]
};

struct ModelParams {
  NetConfig config;
  Tensor w_in, b_in;    // token projection [W, D_in], [W, 1]
  Tensor w_tau, b_tau;  // timestep embedding [W, W], [W, 1]
  Tensor w_d;           // displacement embedding [W, 2], bias-free by design
  std::vector<BlockParams> blocks;
  Tensor w_out, b_out;  // prediction head [target_dim, W], [target_dim, 1]

  void for_each_tensor(const std::function<void(Tensor&)>& fn);
  void for_each_tensor(const std::function<void(const Tensor&)>& fn) const;
  void zero_grad();
  size_t param_count() const;
};

// Intermediate activations kept for the backward pass.
struct BlockCache {
  Eigen::MatrixXd x_in;                    // block input [N, W]
  Eigen::VectorXd mod;                     // [6W]
  Eigen::MatrixXd ln1, mod1;               // layer norm + modulated [N, W]
  Eigen::VectorXd mu1, istd1;              // per-row layer norm stats
  Eigen::MatrixXd q, k, v;                 // [N, W]
  std::vector<Eigen::MatrixXd> attn_prob;  // per head [N, N]
  Eigen::MatrixXd attn_cat, attn_out;      // [N, W]
  Eigen::MatrixXd h;                       // after attention residual [N, W]
  Eigen::MatrixXd ln2, mod2;               // [N, W]
  Eigen::VectorXd mu2, istd2;
  Eigen::MatrixXd mlp_pre, mlp_act;  // [N, 4W]
  Eigen::MatrixXd mlp_out;           // [N, W]
};

struct ForwardCache {
  Eigen::MatrixXd x0;         // projected tokens + posenc [N, W]
  Eigen::VectorXd cond_pre;   // c before the nonlinearity [W]
  Eigen::VectorXd cond_act;   // silu(c) [W]
  std::vector<BlockCache> blocks;
  Eigen::MatrixXd x_final;    // head input [N, W]
  bool valid = false;
};

ModelParams init_params(const NetConfig& config, uint64_t seed);

// valid marks real (non-padded) tracks; empty means all valid.
TokenBatch build_tokens(const NetConfig& config, const Eigen::MatrixXd& target_noisy,
                        const Conditioning& cond, const Eigen::MatrixXd& features, int tau,
                        const std::vector<uint8_t>& valid = {});

// Returns the predicted clean target [N, target_dim]. Throws NumericError on
// non-finite activations. The cache, when supplied, enables backward().
Eigen::MatrixXd forward(const ModelParams& params, const TokenBatch& batch,
                        ForwardCache* cache = nullptr);

// Accumulates exact reverse-mode gradients into params' grad slots and
// returns the gradient with respect to the input tokens [N, token_dim].
Eigen::MatrixXd backward(ModelParams& params, const TokenBatch& batch, const ForwardCache& cache,
                         const Eigen::MatrixXd& upstream);

}  // namespace trackforge
