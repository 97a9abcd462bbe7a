#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "reina/losses.hpp"
#include "reina/policy_net.hpp"
#include "reina/synth_env.hpp"

namespace reina {

struct TrainConfig {
  PolicyVariant variant = PolicyVariant::kReina;
  int batch_size = 256;
  int steps = 5000;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 1e-4;
  // Linear warmup length; 0 disables warmup.
  int warmup_steps = 100;
  // Distinct (t, n) grid points drawn from each selected utterance.
  int samples_per_utterance = 8;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct StepRecord {
  long step = 0;
  LossBreakdown loss;
  double grad_norm = 0.0;
};

struct TrainReport {
  std::vector<StepRecord> records;
  PolicyParams params;
  // Set when an alignment variant saw batches with no aligned examples.
  bool alignment_warning = false;
};

std::vector<LabeledExample> sample_batch(const Dataset& dataset, const Oracle& oracle,
                                         const TrainConfig& config, std::mt19937_64& rng);

struct BatchObjective {
  LossBreakdown loss;
  Eigen::VectorXd grad;  // empty unless requested
};

// Forward pass, loss and (optionally) the exact parameter gradient for one batch.
BatchObjective evaluate_batch(const PolicyParams& params,
                              const std::vector<LabeledExample>& batch, PolicyVariant variant,
                              const LossWeights& weights, bool with_grad);

// Called after every step with the record just appended.
using StepCallback = std::function<void(const StepRecord&)>;

// AdamW on the total loss. Deterministic for fixed seeds.
TrainReport train(const Dataset& dataset, const Oracle& oracle, const PolicyConfig& policy_config,
                  const TrainConfig& train_config, const LossWeights& weights,
                  const StepCallback& on_step = {});

// Worst |analytic - numeric| / max(|analytic|, |numeric|, 1e-2) over >= 100
// random coordinates, numeric by central differences with h = 1e-5.
double grad_check(const PolicyConfig& policy_config, const LossWeights& weights,
                  PolicyVariant variant, std::uint64_t seed);

std::string training_csv(const TrainReport& report);
void save_training_csv(const TrainReport& report, const std::filesystem::path& path);

}  // namespace reina
