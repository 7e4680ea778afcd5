#pragma once

#include <filesystem>
#include <random>

#include "trackforge/checkpoint.hpp"
#include "trackforge/diffusion.hpp"

namespace trackforge {

struct TrainConfig {
  double lr = 5e-4;
  int warmup_epochs = 5;
  int total_epochs = 20;       // paper-scale reference: 140
  int batch_size = 16;         // paper-scale reference: 64
  double clip_norm = 5.0;
  double ema_decay = 0.9997;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Per-example chance of dropping the history and, independently, the
  // displacement prompt, so all four conditioning modes are trained.
  double history_dropout = 0.3;
  double val_fraction = 0.1;     // tail of the dataset held out for validation
  int checkpoint_every = 1;      // epochs between checkpoints
  int keep_checkpoints = 3;      // recent checkpoints retained beside the best
  // Stop at this epoch boundary while keeping the lr schedule pinned to
  // total_epochs; 0 disables. A later resume continues bit-exactly.
  int stop_after_epochs = 0;
  uint64_t seed = 0;

  void validate() const;
};

// One clip prepared for optimization: clean target, conditioning, appearance
// features, and the padding mask (0 rows are padding).
struct TrainExample {
  DiffusionTarget clean;
  Conditioning cond;
  Eigen::MatrixXd features;
  std::vector<uint8_t> valid;
};

// Clips longer than the horizon are subsampled with stride 8 (reduced when
// the clip is too short for that) down to exactly horizon frames.
TrackSet subsample_to_horizon(const TrackSet& tracks, const NetConfig& net);

// Subsamples clips longer than the horizon with stride 8, encodes the
// diffusion target, and pads the track dimension to pad_n when positive.
TrainExample prepare_example(const TrackSet& tracks, const Eigen::MatrixXd& features,
                             const NetConfig& net, int pad_n = 0);

// Linear warmup to lr over the warmup steps, then cosine decay to 0.
double lr_at(long step, long warmup_steps, long total_steps, double base_lr);

// Scales all gradients so their global L2 norm is at most max_norm;
// returns the pre-clip norm.
double clip_gradients(ModelParams& params, double max_norm);

struct AdamState {
  std::vector<Eigen::MatrixXd> m, v;
  long step = 0;

  explicit AdamState(const ModelParams& params);
  AdamState() = default;
};

void adam_step(ModelParams& params, AdamState& state, double lr, const TrainConfig& config);

struct TrainResult {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  long steps = 0;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
};

// Full optimization loop. Emits loss.csv (step, lr, loss, grad_norm),
// per-epoch f32 checkpoints (last keep_checkpoints + best by validation
// loss), and a double-precision state file enabling bit-exact resume from
// the last completed epoch. Throws NumericError on a non-finite loss,
// leaving the last good checkpoint on disk.
TrainResult train(const std::vector<TrainExample>& dataset, const NetConfig& net,
                  const TrainConfig& config, const std::filesystem::path& out_dir,
                  bool resume = false);

}  // namespace trackforge
