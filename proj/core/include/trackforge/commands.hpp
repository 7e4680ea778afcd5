#pragma once

#include <filesystem>
#include <optional>

#include "json.hpp"
#include "trackforge/bundle.hpp"
#include "trackforge/homography.hpp"
#include "trackforge/metrics.hpp"
#include "trackforge/stats.hpp"
#include "trackforge/synthkin.hpp"
#include "trackforge/trainer.hpp"

namespace trackforge {

struct PipelineConfig {
  double margin = 0.5;  // bbox expansion fraction before normalization
  RansacParams ransac;
  uint64_t seed = 0;
};

struct SampleConfig {
  int steps = 100;
  double eta = 0.0;
  uint64_t seed = 0;
  int num_samples = 1;
  bool use_history = true;
  std::optional<Vec2> cond_displacement;
};

struct EvalRunConfig {
  EvalConfig metrics;
  std::vector<std::string> methods = {"no-motion", "const-vel", "oracle-vel"};
  int ddim_steps = 100;
  double eta = 0.0;
  uint64_t seed = 0;
};

// Strict JSON parsing: unknown keys raise ConfigError.
GenConfig parse_gen_config(const nlohmann::json& j);
PipelineConfig parse_pipeline_config(const nlohmann::json& j);
NetConfig parse_net_config(const nlohmann::json& j);
TrainConfig parse_train_config(const nlohmann::json& j);
SampleConfig parse_sample_config(const nlohmann::json& j);
EvalRunConfig parse_eval_config(const nlohmann::json& j);

// Sorted clip_* subdirectories of a dataset directory.
std::vector<std::filesystem::path> list_clips(const std::filesystem::path& dir);

// Every command writes run_manifest.json (config hash, seed, artifact
// checksums) into its output directory on success.
void write_run_manifest(const std::filesystem::path& out_dir, const std::string& command,
                        const nlohmann::json& config, uint64_t seed);

void run_gen(const GenConfig& config, const std::filesystem::path& out_dir);

struct PipelineRunReport {
  int clips = 0;
  int discarded = 0;
  double mean_inlier_ratio = 0.0;
};
PipelineRunReport run_pipeline(const PipelineConfig& config, const std::filesystem::path& in_dir,
                               const std::filesystem::path& out_dir);

TrainResult run_train(const NetConfig& net, const TrainConfig& config,
                      const std::filesystem::path& data_dir,
                      const std::filesystem::path& out_dir, bool resume = false);

void run_sample(const SampleConfig& config, const std::filesystem::path& checkpoint,
                const std::filesystem::path& data_dir, const std::filesystem::path& out_dir);

std::vector<ReportRow> run_eval(const EvalRunConfig& config,
                                const std::filesystem::path& checkpoint,
                                const std::filesystem::path& data_dir,
                                const std::filesystem::path& out_dir);

MotionStats run_stats(const std::filesystem::path& data_dir,
                      const std::filesystem::path& out_dir);

}  // namespace trackforge
