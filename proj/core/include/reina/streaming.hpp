#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "reina/metrics.hpp"
#include "reina/policy_net.hpp"
#include "reina/synth_env.hpp"

namespace reina {

struct StreamConfig {
  double chunk_ms = 250.0;
  double alpha = 0.0;
  // Emission cap; 0 means 4 * N for each utterance.
  int max_tokens = 0;

  void validate() const;
  double chunk_s() const { return chunk_ms / 1000.0; }
};

// What a policy sees before deciding whether to consume another chunk.
struct DecisionState {
  const Utterance& utt;
  double t_s;
  std::size_t n;  // tokens written so far
  int chunks_read;
};

class ReadPolicy {
 public:
  virtual ~ReadPolicy() = default;
  // true = READ another chunk, false = WRITE the next token.
  virtual bool read(const DecisionState& state) const = 0;
};

// READ iff score(state) > alpha.
class ThresholdPolicy final : public ReadPolicy {
 public:
  using Scorer = std::function<double(const DecisionState&)>;

  ThresholdPolicy(Scorer scorer, double alpha) : scorer_(std::move(scorer)), alpha_(alpha) {}
  bool read(const DecisionState& state) const override { return scorer_(state) > alpha_; }
  double alpha() const { return alpha_; }

 private:
  Scorer scorer_;
  double alpha_;
};

// Scores with the trained policy head on oracle features.
ThresholdPolicy make_network_policy(const Oracle& oracle, const PolicyParams& params,
                                    PolicyVariant variant, double alpha);
// Scores with the exact information gain (a perfectly calibrated q).
ThresholdPolicy make_oracle_policy(const Oracle& oracle, double alpha);

// READ while fewer than k + n chunks have been consumed.
class WaitKPolicy final : public ReadPolicy {
 public:
  explicit WaitKPolicy(int k);
  bool read(const DecisionState& state) const override;

 private:
  int k_;
};

std::unique_ptr<ReadPolicy> wait_k_policy(int k);

EmissionLog simulate(const Oracle& oracle, const ReadPolicy& policy, const Utterance& utt,
                     const StreamConfig& config);
EmissionLog simulate(const Oracle& oracle, const PolicyParams& params, const Utterance& utt,
                     PolicyVariant variant, const StreamConfig& config);

// Builds the policy used at a given threshold; lets sweep run any policy family.
using PolicyFactory = std::function<std::unique_ptr<ReadPolicy>(double alpha)>;

struct SweepResult {
  std::vector<ParetoPoint> points;        // ascending alpha
  std::vector<std::vector<EmissionLog>> logs;  // logs[k] belongs to points[k]
};

SweepResult sweep(const Oracle& oracle, const PolicyFactory& factory, const Dataset& dataset,
                  std::span<const double> alphas, const StreamConfig& config);
SweepResult sweep(const Oracle& oracle, const PolicyParams& params, const Dataset& dataset,
                  PolicyVariant variant, std::span<const double> alphas,
                  const StreamConfig& config);

// Corpus BLEU, mean LAAL and read-loop % of one set of logs.
ParetoPoint evaluate_logs(double alpha, std::span<const EmissionLog> logs, const Dataset& dataset);

// Quantiles of the policy score over every chunk-grid decision point of the
// dataset; a threshold grid that spans the policy's own output range.
std::vector<double> quantile_alphas(const Oracle& oracle, const PolicyParams& params,
                                    const Dataset& dataset, PolicyVariant variant,
                                    const StreamConfig& config, int count);

// Full-audio greedy decode of every utterance.
std::vector<EmissionLog> offline_decode(const Oracle& oracle, const Dataset& dataset);

// {"utt_id","tokens","delays_s","T","forced_tail","read_loop"} per line.
std::string emission_log_to_json_line(const EmissionLog& log);
EmissionLog emission_log_from_json_line(const std::string& line);
void save_emission_logs(std::span<const EmissionLog> logs, const std::filesystem::path& path);
std::vector<EmissionLog> load_emission_logs(const std::filesystem::path& path);

}  // namespace reina
