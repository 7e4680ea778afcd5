// Command-line entrypoint for the track forecasting toolkit: synthetic data
// generation, stabilization pipeline, training, sampling, evaluation, and
// motion statistics.
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "trackforge/commands.hpp"

namespace {

using trackforge::ConfigError;
using trackforge::DataError;
using trackforge::NumericError;

nlohmann::json load_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid JSON in " + path + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trackforge: point-track motion forecasting toolkit"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "Worker thread cap")->capture_default_str();

  std::string config_path, in_dir, out_dir, data_dir, ckpt_path;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic clip dataset");
  int gen_clips = -1;
  uint64_t gen_seed = 0;
  bool gen_seed_set = false;
  std::string gen_buckets;
  gen->add_option("--config", config_path, "JSON config file");
  gen->add_option("--out", out_dir, "Output dataset directory")->required();
  gen->add_option("--clips", gen_clips, "Number of clips (overrides config)");
  gen->add_option("--buckets-only", gen_buckets, "Restrict to one motion bucket");
  gen->add_option_function<uint64_t>(
      "--seed", [&](uint64_t s) { gen_seed = s; gen_seed_set = true; }, "RNG seed");

  auto* pipeline = app.add_subcommand("pipeline", "Stabilize and normalize pixel-space clips");
  pipeline->add_option("--config", config_path, "JSON config file");
  pipeline->add_option("--in", in_dir, "Input dataset directory")->required();
  pipeline->add_option("--out", out_dir, "Output dataset directory")->required();

  auto* train = app.add_subcommand("train", "Train the forecasting model");
  bool resume = false;
  train->add_option("--config", config_path, "JSON config file (net + train sections)");
  train->add_option("--data", data_dir, "Normalized dataset directory")->required();
  train->add_option("--out", out_dir, "Run output directory")->required();
  train->add_flag("--resume", resume, "Resume from the saved optimizer state");

  auto* sample = app.add_subcommand("sample", "Sample forecasts from a checkpoint");
  int steps = 100, num_samples = 1;
  double eta = 0.0;
  uint64_t sample_seed = 0;
  std::string cond_disp;
  sample->add_option("--config", config_path, "JSON config file");
  sample->add_option("--checkpoint", ckpt_path, "Model checkpoint")->required();
  sample->add_option("--data", data_dir, "Conditioning dataset directory")->required();
  sample->add_option("--out", out_dir, "Output directory")->required();
  sample->add_option("--steps", steps, "Sampler steps")->capture_default_str();
  sample->add_option("--eta", eta, "Sampler stochasticity")->capture_default_str();
  sample->add_option("--seed", sample_seed, "Base seed; sample k uses seed + k");
  sample->add_option("--num-samples", num_samples, "Samples per clip")->capture_default_str();
  sample->add_option("--cond-displacement", cond_disp, "Displacement prompt dx,dy");

  auto* eval = app.add_subcommand("eval", "Evaluate methods and write report.csv");
  std::string methods_csv;
  eval->add_option("--config", config_path, "JSON config file");
  eval->add_option("--checkpoint", ckpt_path, "Model checkpoint (model-* methods)");
  eval->add_option("--data", data_dir, "Evaluation dataset directory")->required();
  eval->add_option("--out", out_dir, "Output directory")->required();
  eval->add_option("--methods", methods_csv, "Comma-separated method list");

  auto* stats = app.add_subcommand("stats", "Fit the clip displacement distribution");
  stats->add_option("--data", data_dir, "Dataset directory")->required();
  stats->add_option("--out", out_dir, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);
  if (threads < 1) {
    std::cerr << "error: --threads must be positive\n";
    return 2;
  }

  try {
    if (gen->parsed()) {
      auto cfg = trackforge::parse_gen_config(load_config(config_path));
      if (gen_clips >= 0) cfg.clips = gen_clips;
      if (gen_seed_set) cfg.seed = gen_seed;
      if (!gen_buckets.empty()) cfg.buckets_only = gen_buckets;
      trackforge::run_gen(cfg, out_dir);
    } else if (pipeline->parsed()) {
      auto cfg = trackforge::parse_pipeline_config(load_config(config_path));
      auto report = trackforge::run_pipeline(cfg, in_dir, out_dir);
      std::cout << "pipeline: " << report.clips - report.discarded << "/" << report.clips
                << " clips kept, mean inlier ratio " << report.mean_inlier_ratio << "\n";
    } else if (train->parsed()) {
      auto j = load_config(config_path);
      auto net = trackforge::parse_net_config(j.value("net", nlohmann::json::object()));
      auto cfg = trackforge::parse_train_config(j.value("train", nlohmann::json::object()));
      for (const auto& [key, value] : j.items()) {
        (void)value;
        if (key != "net" && key != "train")
          throw ConfigError("train config: unknown section \"" + key + "\"");
      }
      auto result = trackforge::run_train(net, cfg, data_dir, out_dir, resume);
      std::cout << "train: " << result.steps << " steps, loss " << result.initial_loss << " -> "
                << result.final_loss << "\n";
    } else if (sample->parsed()) {
      auto cfg = trackforge::parse_sample_config(load_config(config_path));
      if (sample->count("--steps")) cfg.steps = steps;
      if (sample->count("--eta")) cfg.eta = eta;
      if (sample->count("--seed")) cfg.seed = sample_seed;
      if (sample->count("--num-samples")) cfg.num_samples = num_samples;
      if (!cond_disp.empty()) {
        double dx, dy;
        if (std::sscanf(cond_disp.c_str(), "%lf,%lf", &dx, &dy) != 2)
          throw ConfigError("--cond-displacement expects dx,dy");
        cfg.cond_displacement = trackforge::Vec2{dx, dy};
      }
      trackforge::run_sample(cfg, ckpt_path, data_dir, out_dir);
    } else if (eval->parsed()) {
      auto cfg = trackforge::parse_eval_config(load_config(config_path));
      if (!methods_csv.empty()) {
        cfg.methods.clear();
        std::stringstream ss(methods_csv);
        std::string item;
        while (std::getline(ss, item, ',')) cfg.methods.push_back(item);
      }
      trackforge::run_eval(cfg, ckpt_path, data_dir, out_dir);
    } else if (stats->parsed()) {
      auto st = trackforge::run_stats(data_dir, out_dir);
      std::cout << "stats: mu " << st.lognormal_mu << " sigma " << st.lognormal_sigma
                << " R2(log-normal) " << st.r2_lognormal << " R2(power-law) " << st.r2_powerlaw
                << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "{\"error\":\"config\",\"message\":\"" << e.what() << "\"}\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "{\"error\":\"data\",\"message\":\"" << e.what() << "\"}\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "{\"error\":\"numeric\",\"message\":\"" << e.what() << "\"}\n";
    return 4;
  }
  return 0;
}
