#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "reina/losses.hpp"
#include "reina/metrics.hpp"
#include "reina/policy_net.hpp"
#include "reina/streaming.hpp"
#include "reina/synth_env.hpp"
#include "reina/trainer.hpp"

namespace reina {

struct ExperimentPaths {
  std::filesystem::path dataset;     // default: <out_dir>/dataset.jsonl
  std::filesystem::path checkpoint;  // default: <out_dir>/policy.ckpt
  std::filesystem::path out_dir = "out";
};

struct ExperimentConfig {
  ExperimentPaths paths;
  int count = 200;
  SynthConfig synth;
  std::vector<int> hidden_dims{64, 64};
  double time_base = 100.0;
  TrainConfig train;
  LossWeights loss;
  StreamConfig stream;
  // Explicit thresholds; when empty, sweep uses `auto_alphas` score quantiles.
  std::vector<double> alphas;
  int auto_alphas = 10;
  // Unset (x >= y) means: the latency range shared by every reported run.
  LatencyBand band{0.0, 0.0};
  int bins = 10;
  // Utterance index whose (t, n) information-gain grid is exported.
  int info_gain_utterance = 0;
  PolicyVariant variant = PolicyVariant::kReina;

  void validate() const;
  std::filesystem::path dataset_path() const;
  std::filesystem::path checkpoint_path() const;
  PolicyConfig policy_config() const;
};

// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig experiment_config_from_json(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string experiment_config_to_json(const ExperimentConfig& config);

struct GenResult {
  std::filesystem::path dataset;
  int count = 0;
  std::uint64_t seed = 0;
};
GenResult cmd_gen(const ExperimentConfig& config, std::ostream& log);

struct TrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path csv;
  TrainReport report;
};
TrainResult cmd_train(const ExperimentConfig& config, std::ostream& log);

struct SimulateResult {
  std::filesystem::path logs;
  ParetoPoint point;
};
SimulateResult cmd_simulate(const ExperimentConfig& config, std::ostream& log);

struct SweepOutput {
  std::filesystem::path pareto_csv;
  std::vector<std::filesystem::path> log_files;  // one per pareto row
  std::vector<ParetoPoint> points;
};
SweepOutput cmd_sweep(const ExperimentConfig& config, std::ostream& log);

struct ReportRun {
  std::string label;
  double nose = 0.0;
  std::filesystem::path nose_csv;
  std::filesystem::path latency_bins_csv;
};
struct ReportOutput {
  double offline_quality = 0.0;
  LatencyBand band;
  std::vector<ReportRun> runs;
  std::filesystem::path info_gain_csv;
};
// `run_dirs` are sweep output directories (pareto.csv + logs/).
ReportOutput cmd_report(const ExperimentConfig& config,
                        const std::vector<std::filesystem::path>& run_dirs, std::ostream& log);

// t_s,token_index,info_gain over the frame grid of one utterance.
std::string info_gain_grid_csv(const Oracle& oracle, const Utterance& utt);

}  // namespace reina
