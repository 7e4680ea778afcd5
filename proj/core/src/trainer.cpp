#include "trackforge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "json.hpp"

namespace trackforge {

namespace {

constexpr char kStateMagic[8] = {'T', 'F', 'S', 'T', 'A', 'T', 'E', '1'};

void write_f64_block(std::ostream& out, const Eigen::MatrixXd& m) {
  out.write(reinterpret_cast<const char*>(m.data()),
            std::streamsize(size_t(m.size()) * sizeof(double)));
}

void read_f64_block(std::istream& in, Eigen::MatrixXd& m) {
  in.read(reinterpret_cast<char*>(m.data()), std::streamsize(size_t(m.size()) * sizeof(double)));
}

struct TrainState {
  ModelParams params;
  ModelParams ema;
  AdamState adam;
  int epochs_done = 0;
  double best_val = std::numeric_limits<double>::infinity();
  double initial_loss = 0.0;
  bool has_initial = false;
};

void save_state(const std::filesystem::path& path, const TrainState& st) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("save_state: cannot open " + tmp.string());
    out.write(kStateMagic, sizeof kStateMagic);
    nlohmann::json meta = {{"epochs_done", st.epochs_done},
                           {"adam_step", st.adam.step},
                           {"best_val", st.best_val},
                           {"initial_loss", st.initial_loss},
                           {"has_initial", st.has_initial}};
    std::string m = meta.dump();
    uint32_t len = uint32_t(m.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(m.data(), std::streamsize(m.size()));
    st.params.for_each_tensor([&](const Tensor& t) { write_f64_block(out, t.value); });
    st.ema.for_each_tensor([&](const Tensor& t) { write_f64_block(out, t.value); });
    for (const auto& m2 : st.adam.m) write_f64_block(out, m2);
    for (const auto& v2 : st.adam.v) write_f64_block(out, v2);
    if (!out) throw DataError("save_state: write failed");
  }
  std::filesystem::rename(tmp, path);
}

void load_state(const std::filesystem::path& path, TrainState& st) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_state: cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kStateMagic, sizeof kStateMagic) != 0)
    throw DataError("load_state: bad magic");
  uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string m(len, '\0');
  in.read(m.data(), len);
  auto meta = nlohmann::json::parse(m);
  st.epochs_done = meta.at("epochs_done");
  st.adam.step = meta.at("adam_step");
  st.best_val = meta.at("best_val");
  st.initial_loss = meta.at("initial_loss");
  st.has_initial = meta.at("has_initial");
  st.params.for_each_tensor([&](Tensor& t) { read_f64_block(in, t.value); });
  st.ema.for_each_tensor([&](Tensor& t) { read_f64_block(in, t.value); });
  for (auto& m2 : st.adam.m) read_f64_block(in, m2);
  for (auto& v2 : st.adam.v) read_f64_block(in, v2);
  if (!in) throw DataError("load_state: truncated state file");
}

uint64_t epoch_seed(uint64_t seed, uint64_t epoch, uint64_t stream) {
  return splitmix64(seed ^ (0x9E3779B97F4A7C15ULL * (epoch + 1)) ^ (stream << 56));
}

}  // namespace

void TrainConfig::validate() const {
  if (lr <= 0 || clip_norm <= 0 || batch_size < 1 || total_epochs < 1 ||
      warmup_epochs >= total_epochs || warmup_epochs < 0)
    throw ConfigError("train config: invalid optimizer settings");
  if (ema_decay <= 0 || ema_decay >= 1 || history_dropout < 0 || history_dropout > 1 ||
      val_fraction < 0 || val_fraction >= 1 || checkpoint_every < 1 || keep_checkpoints < 1 ||
      stop_after_epochs < 0 || stop_after_epochs > total_epochs)
    throw ConfigError("train config: invalid auxiliary settings");
}

TrackSet subsample_to_horizon(const TrackSet& tracks, const NetConfig& net) {
  TrackSet sub = tracks;
  if (tracks.t > net.horizon) {
    int stride = std::max(1, std::min(8, (tracks.t - 1) / (net.horizon - 1)));
    sub.resize(tracks.n, net.horizon);
    sub.fps = tracks.fps;
    for (int i = 0; i < tracks.n; ++i)
      for (int s = 0; s < net.horizon; ++s) {
        sub.x(i, s) = tracks.x(i, s * stride);
        sub.y(i, s) = tracks.y(i, s * stride);
        sub.vis(i, s) = tracks.vis(i, s * stride);
      }
  }
  if (sub.t != net.horizon) throw DataError("subsample_to_horizon: clip shorter than horizon");
  sub.t_cond = net.t_cond;
  return sub;
}

TrainExample prepare_example(const TrackSet& tracks, const Eigen::MatrixXd& features,
                             const NetConfig& net, int pad_n) {
  if (features.rows() != tracks.n || features.cols() != net.feature_dim)
    throw DataError("prepare_example: feature shape mismatch");
  TrackSet sub = subsample_to_horizon(tracks, net);

  TrainExample ex;
  int n_out = pad_n > 0 ? pad_n : sub.n;
  if (n_out < sub.n) throw DataError("prepare_example: pad_n below track count");
  ex.clean = encode_target(sub, net.scale_v, net.scale_o);
  ex.cond = make_conditioning(sub);
  ex.valid.assign(size_t(n_out), 1);
  ex.features = Eigen::MatrixXd::Zero(n_out, net.feature_dim);
  ex.features.topRows(sub.n) = features;
  if (n_out > sub.n) {
    ex.clean.n = n_out;
    ex.clean.scaled_velocities.resize(size_t(n_out) * (sub.t - 1) * 2, 0.0);
    ex.clean.scaled_occlusion.resize(size_t(n_out) * sub.t, 0.0);
    ex.cond.n = n_out;
    ex.cond.history_velocities.resize(size_t(n_out) * (net.t_cond - 1) * 2, 0.0);
    ex.cond.history_visibility.resize(size_t(n_out) * net.t_cond, 0.0);
    ex.cond.start_points.resize(size_t(n_out) * 2, 0.0);
    for (int i = sub.n; i < n_out; ++i) ex.valid[size_t(i)] = 0;
  }
  return ex;
}

double lr_at(long step, long warmup_steps, long total_steps, double base_lr) {
  if (step < warmup_steps) return base_lr * double(step) / double(warmup_steps);
  if (step >= total_steps) return 0.0;
  double progress = double(step - warmup_steps) / double(total_steps - warmup_steps);
  return base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

double clip_gradients(ModelParams& params, double max_norm) {
  double sq = 0.0;
  params.for_each_tensor([&](const Tensor& t) { sq += t.grad.squaredNorm(); });
  double norm = std::sqrt(sq);
  if (norm > max_norm) {
    double scale = max_norm / norm;
    params.for_each_tensor([&](Tensor& t) { t.grad *= scale; });
  }
  return norm;
}

AdamState::AdamState(const ModelParams& params) {
  params.for_each_tensor([&](const Tensor& t) {
    m.push_back(Eigen::MatrixXd::Zero(t.value.rows(), t.value.cols()));
    v.push_back(Eigen::MatrixXd::Zero(t.value.rows(), t.value.cols()));
  });
}

void adam_step(ModelParams& params, AdamState& state, double lr, const TrainConfig& config) {
  ++state.step;
  double bc1 = 1.0 - std::pow(config.adam_beta1, double(state.step));
  double bc2 = 1.0 - std::pow(config.adam_beta2, double(state.step));
  size_t k = 0;
  params.for_each_tensor([&](Tensor& t) {
    auto& m = state.m[k];
    auto& v = state.v[k];
    m = config.adam_beta1 * m + (1.0 - config.adam_beta1) * t.grad;
    v = (config.adam_beta2 * v.array() + (1.0 - config.adam_beta2) * t.grad.array().square())
            .matrix();
    t.value.array() -=
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + config.adam_eps);
    ++k;
  });
}

TrainResult train(const std::vector<TrainExample>& dataset, const NetConfig& net,
                  const TrainConfig& config, const std::filesystem::path& out_dir,
                  bool resume) {
  config.validate();
  net.validate();
  if (dataset.empty()) throw DataError("train: empty dataset");
  std::filesystem::create_directories(out_dir);

  size_t n_val = size_t(double(dataset.size()) * config.val_fraction);
  size_t n_train = dataset.size() - n_val;
  if (n_train == 0) throw DataError("train: no training examples after validation split");

  long steps_per_epoch = long((n_train + size_t(config.batch_size) - 1) / config.batch_size);
  long total_steps = steps_per_epoch * config.total_epochs;
  long warmup_steps = std::max<long>(1, steps_per_epoch * config.warmup_epochs);

  NoiseSchedule sched;
  TrainState st{init_params(net, config.seed), ModelParams{}, AdamState{}};
  st.ema = st.params;
  st.adam = AdamState(st.params);
  std::filesystem::path state_path = out_dir / "state.bin";
  if (resume) {
    if (!std::filesystem::exists(state_path)) throw DataError("train: no state file to resume");
    load_state(state_path, st);
  }

  std::ofstream log(out_dir / "loss.csv",
                    resume ? std::ios::app : std::ios::trunc);
  if (!resume) log << "step,lr,loss,grad_norm\n";
  log.precision(12);

  std::vector<std::filesystem::path> recent;
  TrainResult result;
  result.initial_loss = st.initial_loss;

  int last_epoch =
      config.stop_after_epochs > 0 ? config.stop_after_epochs : config.total_epochs;
  for (int epoch = st.epochs_done; epoch < last_epoch; ++epoch) {
    std::mt19937_64 rng(epoch_seed(config.seed, uint64_t(epoch), 0));
    std::vector<size_t> order(n_train);
    for (size_t i = 0; i < n_train; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_real_distribution<double> coin(0.0, 1.0);

    double epoch_loss = 0.0;
    for (long b = 0; b < steps_per_epoch; ++b) {
      size_t begin = size_t(b) * size_t(config.batch_size);
      size_t end = std::min(n_train, begin + size_t(config.batch_size));
      st.params.zero_grad();
      double batch_loss = 0.0;
      for (size_t k = begin; k < end; ++k) {
        const TrainExample& ex = dataset[order[k]];
        Conditioning cond = ex.cond;
        // Independent coins so every conditioning mode (with/without history,
        // with/without displacement) appears during training.
        if (coin(rng) < config.history_dropout) cond.history_present = false;
        if (coin(rng) < config.history_dropout) cond.has_displacement = false;
        batch_loss +=
            training_loss(st.params, ex.clean, cond, ex.features, ex.valid, sched, rng);
      }
      double count = double(end - begin);
      batch_loss /= count;
      st.params.for_each_tensor([&](Tensor& t) { t.grad /= count; });

      if (!std::isfinite(batch_loss))
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           "; last good checkpoint retained");
      if (!st.has_initial) {
        st.initial_loss = batch_loss;
        st.has_initial = true;
        result.initial_loss = batch_loss;
      }

      long global_step = epoch * steps_per_epoch + b;
      double lr = lr_at(global_step, warmup_steps, total_steps, config.lr);
      double grad_norm = clip_gradients(st.params, config.clip_norm);
      adam_step(st.params, st.adam, lr, config);
      ema_update(st.ema, st.params, config.ema_decay);
      log << global_step << "," << lr << "," << batch_loss << "," << grad_norm << "\n";
      epoch_loss += batch_loss;
      result.final_loss = batch_loss;
      result.steps = global_step + 1;
    }
    epoch_loss /= double(steps_per_epoch);

    double val_loss = epoch_loss;
    if (n_val > 0) {
      std::mt19937_64 val_rng(epoch_seed(config.seed, uint64_t(epoch), 1));
      val_loss = 0.0;
      for (size_t k = n_train; k < dataset.size(); ++k) {
        const TrainExample& ex = dataset[k];
        val_loss += training_loss(st.params, ex.clean, ex.cond, ex.features, ex.valid, sched,
                                  val_rng);
      }
      val_loss /= double(n_val);
      st.params.zero_grad();
    }

    st.epochs_done = epoch + 1;
    bool last = epoch + 1 == config.total_epochs;
    if ((epoch + 1) % config.checkpoint_every == 0 || last) {
      char name[32];
      std::snprintf(name, sizeof name, "ckpt_epoch_%04d.ckpt", epoch + 1);
      std::filesystem::path ckpt = out_dir / name;
      save_checkpoint(ckpt, st.params, st.ema);
      recent.push_back(ckpt);
      while (recent.size() > size_t(config.keep_checkpoints)) {
        std::filesystem::remove(recent.front());
        recent.erase(recent.begin());
      }
      if (val_loss <= st.best_val) {
        st.best_val = val_loss;
        std::filesystem::copy_file(ckpt, out_dir / "ckpt_best.ckpt",
                                   std::filesystem::copy_options::overwrite_existing);
      }
      save_state(state_path, st);
      result.last_checkpoint = ckpt;
    }
  }
  result.best_checkpoint = out_dir / "ckpt_best.ckpt";
  return result;
}

}  // namespace trackforge
