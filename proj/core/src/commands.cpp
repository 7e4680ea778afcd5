#include "trackforge/commands.hpp"

#include <algorithm>
#include <fstream>

#include "trackforge/diffusion.hpp"

namespace trackforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* context) {
  if (!j.is_object()) throw ConfigError(std::string(context) + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; }) == allowed.end())
      throw ConfigError(std::string(context) + ": unknown key \"" + key + "\"");
  }
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return json::parse(in);
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

uint64_t file_checksum(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a64(bytes.data(), bytes.size());
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Eigen::MatrixXd feature_matrix(const Bundle& bundle) {
  Eigen::MatrixXd f(bundle.tracks.n, std::max(1, bundle.feature_dim));
  f.setZero();
  for (int i = 0; i < bundle.tracks.n; ++i)
    for (int c = 0; c < bundle.feature_dim; ++c)
      f(i, c) = double(bundle.features[size_t(i) * bundle.feature_dim + size_t(c)]);
  return f;
}

}  // namespace

GenConfig parse_gen_config(const json& j) {
  check_keys(j,
             {"clips", "seed", "n_points", "n_frames", "t_cond", "fps", "feature_dim", "scale_v",
              "scale_o", "use_lognormal", "lognormal_mu", "lognormal_sigma", "buckets_only",
              "max_pan_px", "max_zoom_rate", "jitter_sigma_px"},
             "gen config");
  GenConfig c;
  c.clips = j.value("clips", c.clips);
  c.seed = j.value("seed", c.seed);
  c.n_points = j.value("n_points", c.n_points);
  c.n_frames = j.value("n_frames", c.n_frames);
  c.t_cond = j.value("t_cond", c.t_cond);
  c.fps = j.value("fps", c.fps);
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  c.scale_v = j.value("scale_v", c.scale_v);
  c.scale_o = j.value("scale_o", c.scale_o);
  c.use_lognormal = j.value("use_lognormal", c.use_lognormal);
  c.lognormal_mu = j.value("lognormal_mu", c.lognormal_mu);
  c.lognormal_sigma = j.value("lognormal_sigma", c.lognormal_sigma);
  c.buckets_only = j.value("buckets_only", c.buckets_only);
  c.max_pan_px = j.value("max_pan_px", c.max_pan_px);
  c.max_zoom_rate = j.value("max_zoom_rate", c.max_zoom_rate);
  c.jitter_sigma_px = j.value("jitter_sigma_px", c.jitter_sigma_px);
  return c;
}

PipelineConfig parse_pipeline_config(const json& j) {
  check_keys(j, {"margin", "inlier_threshold_px", "iterations", "refinement_passes", "seed"},
             "pipeline config");
  PipelineConfig c;
  c.margin = j.value("margin", c.margin);
  c.ransac.inlier_threshold_px = j.value("inlier_threshold_px", c.ransac.inlier_threshold_px);
  c.ransac.iterations = j.value("iterations", c.ransac.iterations);
  c.ransac.refinement_passes = j.value("refinement_passes", c.ransac.refinement_passes);
  c.seed = j.value("seed", c.seed);
  return c;
}

NetConfig parse_net_config(const json& j) {
  check_keys(j,
             {"depth", "width", "heads", "feature_dim", "t_cond", "horizon", "hist_embed_dim",
              "scale_v", "scale_o"},
             "net config");
  NetConfig c;
  c.depth = j.value("depth", c.depth);
  c.width = j.value("width", c.width);
  c.heads = j.value("heads", c.heads);
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  c.t_cond = j.value("t_cond", c.t_cond);
  c.horizon = j.value("horizon", c.horizon);
  c.hist_embed_dim = j.value("hist_embed_dim", c.hist_embed_dim);
  c.scale_v = j.value("scale_v", c.scale_v);
  c.scale_o = j.value("scale_o", c.scale_o);
  c.validate();
  return c;
}

TrainConfig parse_train_config(const json& j) {
  check_keys(j,
             {"lr", "warmup_epochs", "total_epochs", "batch_size", "clip_norm", "ema_decay",
              "adam_beta1", "adam_beta2", "adam_eps", "history_dropout", "val_fraction",
              "checkpoint_every", "keep_checkpoints", "stop_after_epochs", "seed"},
             "train config");
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
  c.total_epochs = j.value("total_epochs", c.total_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.ema_decay = j.value("ema_decay", c.ema_decay);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.history_dropout = j.value("history_dropout", c.history_dropout);
  c.val_fraction = j.value("val_fraction", c.val_fraction);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.keep_checkpoints = j.value("keep_checkpoints", c.keep_checkpoints);
  c.stop_after_epochs = j.value("stop_after_epochs", c.stop_after_epochs);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

SampleConfig parse_sample_config(const json& j) {
  check_keys(j, {"steps", "eta", "seed", "num_samples", "use_history", "cond_displacement"},
             "sample config");
  SampleConfig c;
  c.steps = j.value("steps", c.steps);
  c.eta = j.value("eta", c.eta);
  c.seed = j.value("seed", c.seed);
  c.num_samples = j.value("num_samples", c.num_samples);
  c.use_history = j.value("use_history", c.use_history);
  if (j.contains("cond_displacement")) {
    auto d = j.at("cond_displacement");
    if (!d.is_array() || d.size() != 2)
      throw ConfigError("sample config: cond_displacement must be [dx, dy]");
    c.cond_displacement = Vec2{d[0].get<double>(), d[1].get<double>()};
  }
  return c;
}

EvalRunConfig parse_eval_config(const json& j) {
  check_keys(j,
             {"k", "pwt_thresholds", "pixel_scale", "bucket_low", "bucket_high",
              "squared_errors", "fvmd_grid", "fvmd_angular_bins", "methods", "ddim_steps", "eta",
              "seed"},
             "eval config");
  EvalRunConfig c;
  c.metrics.k = j.value("k", c.metrics.k);
  if (j.contains("pwt_thresholds"))
    c.metrics.pwt_thresholds = j.at("pwt_thresholds").get<std::vector<double>>();
  c.metrics.pixel_scale = j.value("pixel_scale", c.metrics.pixel_scale);
  c.metrics.bucket_low = j.value("bucket_low", c.metrics.bucket_low);
  c.metrics.bucket_high = j.value("bucket_high", c.metrics.bucket_high);
  c.metrics.squared_errors = j.value("squared_errors", c.metrics.squared_errors);
  if (j.contains("fvmd_grid")) {
    auto g = j.at("fvmd_grid");
    if (!g.is_array() || g.size() != 3) throw ConfigError("eval config: fvmd_grid must be [x,y,t]");
    c.metrics.fvmd_grid_x = g[0];
    c.metrics.fvmd_grid_y = g[1];
    c.metrics.fvmd_grid_t = g[2];
  }
  c.metrics.fvmd_angular_bins = j.value("fvmd_angular_bins", c.metrics.fvmd_angular_bins);
  if (j.contains("methods")) c.methods = j.at("methods").get<std::vector<std::string>>();
  c.ddim_steps = j.value("ddim_steps", c.ddim_steps);
  c.eta = j.value("eta", c.eta);
  c.seed = j.value("seed", c.seed);
  c.metrics.validate();
  return c;
}

std::vector<fs::path> list_clips(const fs::path& dir) {
  std::vector<fs::path> clips;
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory() && entry.path().filename().string().rfind("clip_", 0) == 0)
      clips.push_back(entry.path());
  std::sort(clips.begin(), clips.end());
  return clips;
}

void write_run_manifest(const fs::path& out_dir, const std::string& command, const json& config,
                        uint64_t seed) {
  json artifacts = json::object();
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(out_dir))
    if (entry.is_regular_file() && entry.path().filename() != "run_manifest.json")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files)
    artifacts[fs::relative(f, out_dir).generic_string()] = hex64(file_checksum(f));
  std::string cfg = config.dump();
  json manifest = {{"command", command},
                   {"config_hash", hex64(fnv1a64(cfg.data(), cfg.size()))},
                   {"seed", seed},
                   {"format_version", 1},
                   {"artifacts", artifacts}};
  write_json_file(out_dir / "run_manifest.json", manifest);
}

void run_gen(const GenConfig& config, const fs::path& out_dir) {
  if (config.clips < 1) throw ConfigError("gen: clips must be positive");
  fs::create_directories(out_dir);
  for (int i = 0; i < config.clips; ++i) {
    ClipData clip = generate_clip(config, i);
    char name[16];
    std::snprintf(name, sizeof name, "clip_%04d", i);
    fs::path dir = out_dir / name;

    Bundle b;
    b.tracks = clip.scene.tracks;
    b.tracks.positions = clip.camera.pixel_tracks;
    b.tracks.t_cond = config.t_cond;
    b.scale_v = config.scale_v;
    b.scale_o = config.scale_o;
    b.space = "pixel";
    b.provenance = "synthkin";
    b.feature_dim = config.feature_dim;
    b.features = clip.features;
    write_bundle(dir, b);
    write_f32(dir / "background.f32", clip.camera.background);
    write_f32(dir / "truth.f32", clip.camera.truth_pixel_tracks);
    write_json_file(dir / "clip.json",
                    {{"bucket", clip.bucket},
                     {"clip_seed", config.seed ^ uint64_t(i)},
                     {"pan", {clip.pan[0], clip.pan[1]}},
                     {"zoom_rate", clip.zoom_rate},
                     {"planted_displacement", clip.planted_displacement},
                     {"n_background", clip.camera.n_background},
                     {"scene_scale", kScenePixels}});
  }
  json cfg = {{"clips", config.clips}, {"seed", config.seed}, {"n_points", config.n_points},
              {"n_frames", config.n_frames}, {"use_lognormal", config.use_lognormal}};
  write_run_manifest(out_dir, "gen", cfg, config.seed);
}

PipelineRunReport run_pipeline(const PipelineConfig& config, const fs::path& in_dir,
                               const fs::path& out_dir) {
  auto clips = list_clips(in_dir);
  if (clips.empty()) throw DataError("pipeline: no clips in " + in_dir.string());
  fs::create_directories(out_dir);
  PipelineRunReport report;
  double inlier_sum = 0.0;
  json per_clip = json::array();

  for (const auto& clip_dir : clips) {
    Bundle b = read_bundle(clip_dir);
    if (b.space != "pixel")
      throw DataError("pipeline: expected pixel-space bundle in " + clip_dir.string());
    int t = b.tracks.t;
    auto bg = read_f32(clip_dir / "background.f32");
    int n_bg = int(bg.size() / (size_t(t) * 2));
    std::vector<uint8_t> bg_vis(size_t(n_bg) * t, 1);
    uint64_t clip_seed = splitmix64(config.seed ^ fnv1a64(clip_dir.filename().string().data(),
                                                          clip_dir.filename().string().size()));
    HomographySeq seq =
        estimate_stabilization(bg, n_bg, t, bg_vis, config.ransac, clip_seed);
    ++report.clips;
    if (!seq.valid) {
      ++report.discarded;
      per_clip.push_back({{"clip", clip_dir.filename().string()}, {"discarded", true}});
      continue;
    }
    double mean_ratio = 0.0;
    for (double r : seq.inlier_ratios) mean_ratio += r;
    mean_ratio /= double(seq.inlier_ratios.size());
    inlier_sum += mean_ratio;

    StabilizedTracks st =
        stabilize_tracks(b.tracks.positions, b.tracks.n, t, seq, seq.reference_index);
    BBox bbox{1e300, 1e300, -1e300, -1e300};
    for (int i = 0; i < b.tracks.n; ++i)
      for (int s = 0; s < t; ++s) {
        if (!b.tracks.vis(i, s) || !st.point_valid[size_t(i) * t + size_t(s)]) continue;
        double x = st.positions[(size_t(i) * t + size_t(s)) * 2];
        double y = st.positions[(size_t(i) * t + size_t(s)) * 2 + 1];
        bbox.x0 = std::min(bbox.x0, x);
        bbox.y0 = std::min(bbox.y0, y);
        bbox.x1 = std::max(bbox.x1, x);
        bbox.y1 = std::max(bbox.y1, y);
      }

    Bundle out = b;
    out.space = "normalized";
    out.tracks.positions =
        normalize_to_bbox(st.positions, b.tracks.n, t, bbox, config.margin);
    for (int i = 0; i < b.tracks.n; ++i)
      for (int s = 0; s < t; ++s)
        out.tracks.vis(i, s) = b.tracks.vis(i, s) && st.point_valid[size_t(i) * t + size_t(s)];
    fs::path dst = out_dir / clip_dir.filename();
    write_bundle(dst, out);
    if (fs::exists(clip_dir / "clip.json"))
      fs::copy_file(clip_dir / "clip.json", dst / "clip.json",
                    fs::copy_options::overwrite_existing);
    per_clip.push_back({{"clip", clip_dir.filename().string()},
                        {"discarded", false},
                        {"mean_inlier_ratio", mean_ratio}});
  }
  int kept = report.clips - report.discarded;
  report.mean_inlier_ratio = kept > 0 ? inlier_sum / double(kept) : 0.0;
  write_json_file(out_dir / "pipeline_report.json",
                  {{"clips", report.clips},
                   {"discarded", report.discarded},
                   {"mean_inlier_ratio", report.mean_inlier_ratio},
                   {"per_clip", per_clip}});
  json cfg = {{"margin", config.margin}, {"seed", config.seed}};
  write_run_manifest(out_dir, "pipeline", cfg, config.seed);
  return report;
}

TrainResult run_train(const NetConfig& net, const TrainConfig& config, const fs::path& data_dir,
                      const fs::path& out_dir, bool resume) {
  auto clips = list_clips(data_dir);
  if (clips.empty()) throw DataError("train: no clips in " + data_dir.string());
  std::vector<TrainExample> dataset;
  int pad_n = 0;
  std::vector<Bundle> bundles;
  for (const auto& dir : clips) {
    bundles.push_back(read_bundle(dir));
    pad_n = std::max(pad_n, bundles.back().tracks.n);
  }
  for (const auto& b : bundles) {
    if (b.feature_dim != net.feature_dim)
      throw DataError("train: bundle feature_dim does not match the network config");
    dataset.push_back(prepare_example(b.tracks, feature_matrix(b), net, pad_n));
  }
  TrainResult result = train(dataset, net, config, out_dir, resume);
  json cfg = {{"epochs", config.total_epochs}, {"batch_size", config.batch_size},
              {"lr", config.lr}, {"seed", config.seed}};
  write_run_manifest(out_dir, "train", cfg, config.seed);
  return result;
}

void run_sample(const SampleConfig& config, const fs::path& checkpoint, const fs::path& data_dir,
                const fs::path& out_dir) {
  if (config.num_samples < 1) throw ConfigError("sample: num_samples must be positive");
  Checkpoint ck = load_checkpoint(checkpoint);
  const NetConfig& net = ck.ema.config;
  NoiseSchedule sched;
  DDIMParams ddim{config.steps, config.eta};
  auto clips = list_clips(data_dir);
  if (clips.empty()) throw DataError("sample: no clips in " + data_dir.string());
  fs::create_directories(out_dir);

  for (const auto& clip_dir : clips) {
    Bundle b = read_bundle(clip_dir);
    TrainExample ex = prepare_example(b.tracks, feature_matrix(b), net);
    Conditioning cond = ex.cond;
    cond.history_present = config.use_history;
    cond.has_displacement = config.cond_displacement.has_value();
    if (cond.has_displacement) cond.displacement = *config.cond_displacement;

    for (int k = 0; k < config.num_samples; ++k) {
      TrackSet pred = ddim_sample(ck.ema, cond, ex.features, sched, ddim, config.seed + k);
      Bundle out;
      out.tracks = pred;
      out.tracks.fps = b.tracks.fps;
      out.scale_v = b.scale_v;
      out.scale_o = b.scale_o;
      out.space = b.space;
      out.provenance = "sample seed " + std::to_string(config.seed + k);
      write_bundle(out_dir / clip_dir.filename() / ("sample_" + std::to_string(k)), out);
    }
  }
  json cfg = {{"steps", config.steps}, {"eta", config.eta}, {"seed", config.seed},
              {"num_samples", config.num_samples}};
  write_run_manifest(out_dir, "sample", cfg, config.seed);
}

std::vector<ReportRow> run_eval(const EvalRunConfig& config, const fs::path& checkpoint,
                                const fs::path& data_dir, const fs::path& out_dir) {
  auto clips = list_clips(data_dir);
  if (clips.empty()) throw DataError("eval: no clips in " + data_dir.string());
  fs::create_directories(out_dir);

  bool needs_model = false;
  for (const auto& m : config.methods)
    if (m == "model-uncond" || m == "model-cond") needs_model = true;
  Checkpoint ck;
  if (needs_model) ck = load_checkpoint(checkpoint);
  NetConfig net = needs_model ? ck.ema.config : NetConfig{};
  NoiseSchedule sched;
  DDIMParams ddim{config.ddim_steps, config.eta};

  std::vector<EvalExample> dataset;
  for (const auto& dir : clips) {
    Bundle b = read_bundle(dir);
    EvalExample ex;
    ex.gt = needs_model ? subsample_to_horizon(b.tracks, net) : b.tracks;
    ex.features = feature_matrix(b);
    dataset.push_back(std::move(ex));
  }

  std::vector<ReportRow> rows;
  for (const auto& method : config.methods) {
    SampleFn fn;
    int k = 1;
    if (method == "no-motion") {
      fn = [](const EvalExample& ex, int) { return baseline_no_motion(ex.gt); };
    } else if (method == "const-vel") {
      fn = [](const EvalExample& ex, int) { return baseline_constant_velocity(ex.gt); };
    } else if (method == "oracle-vel") {
      fn = [](const EvalExample& ex, int) { return baseline_oracle_velocity(ex.gt); };
    } else if (method == "model-uncond" || method == "model-cond") {
      k = config.metrics.k;
      bool conditioned = method == "model-cond";
      auto counter = std::make_shared<uint64_t>(0);
      uint64_t base = config.seed;
      fn = [&, conditioned, counter, base](const EvalExample& ex, int) {
        Conditioning cond = make_conditioning(subsample_to_horizon(ex.gt, net));
        cond.has_displacement = false;
        if (conditioned) {
          auto d = displacement_conditioning(ex.gt);
          if (d) {
            cond.has_displacement = true;
            cond.displacement = *d;
          }
        }
        uint64_t seed = splitmix64(base ^ (0x51ED270B9ULL * ++*counter));
        return ddim_sample(ck.ema, cond, ex.features, sched, ddim, seed);
      };
    } else {
      throw ConfigError("eval: unknown method \"" + method + "\"");
    }
    auto method_rows = evaluate(method, fn, k, dataset, config.metrics);
    rows.insert(rows.end(), method_rows.begin(), method_rows.end());
  }

  std::ofstream csv(out_dir / "report.csv");
  csv.precision(12);
  csv << "method,bucket,metric,value\n";
  json jrows = json::array();
  for (const auto& r : rows) {
    csv << r.method << "," << r.bucket << "," << r.metric << "," << r.value << "\n";
    jrows.push_back(
        {{"method", r.method}, {"bucket", r.bucket}, {"metric", r.metric}, {"value", r.value}});
  }
  csv.close();
  write_json_file(out_dir / "report.json", jrows);
  json cfg = {{"methods", config.methods}, {"k", config.metrics.k}, {"seed", config.seed}};
  write_run_manifest(out_dir, "eval", cfg, config.seed);
  return rows;
}

MotionStats run_stats(const fs::path& data_dir, const fs::path& out_dir) {
  auto clips = list_clips(data_dir);
  if (clips.empty()) throw DataError("stats: no clips in " + data_dir.string());
  fs::create_directories(out_dir);
  std::vector<double> displacements;
  for (const auto& dir : clips) {
    Bundle b = read_bundle(dir);
    double d = clip_mean_displacement(b.tracks);
    if (b.space == "pixel") d /= kScenePixels;
    displacements.push_back(d);
  }
  MotionStats stats = motion_statistics(displacements);
  write_stats_csv(out_dir / "stats.csv", stats);
  write_stats_svg(out_dir / "stats.svg", stats);
  write_json_file(out_dir / "stats.json",
                  {{"n_clips", stats.n_clips},
                   {"n_zero", stats.n_zero},
                   {"lognormal_mu", stats.lognormal_mu},
                   {"lognormal_sigma", stats.lognormal_sigma},
                   {"powerlaw_exponent", stats.powerlaw_exponent},
                   {"r2_lognormal", stats.r2_lognormal},
                   {"r2_powerlaw", stats.r2_powerlaw},
                   {"degenerate", stats.degenerate}});
  write_run_manifest(out_dir, "stats", {{"clips", int(clips.size())}}, 0);
  return stats;
}

}  // namespace trackforge
