#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace reina {

struct IntRange {
  int min = 1;
  int max = 1;
};

// Parameters of the synthetic source/target generator and of the analytic
// translation oracle built on top of it.
struct SynthConfig {
  int vocab_size = 50;
  double frame_ms = 50.0;
  IntRange tokens_per_utt_range{4, 10};
  double mean_token_gap_s = 0.8;
  double gap_jitter_s = 0.3;
  // Correct-token probability floor and ceiling of the evidence ramp.
  double p_min = 0.005;
  double p_max = 0.95;
  double ramp_s = 0.25;
  double ambiguity_prob = 0.0;
  // Fraction of utterances whose boundaries may be used as supervision.
  double aligned_prob = 1.0;
  int embed_dim = 8;
  int feature_dim = 16;
  double noise_std = 0.0;
  std::uint64_t rng_seed = 0;

  void validate() const;
  double frame_s() const { return frame_ms / 1000.0; }
};

struct Utterance {
  std::string id;
  double duration_s = 0.0;
  std::vector<int> target_tokens;
  std::vector<double> boundaries_s;
  std::vector<bool> ambiguous_mask;
  bool aligned = true;

  std::size_t size() const { return target_tokens.size(); }
  // Throws ConfigError if the boundary/length invariants do not hold.
  void validate() const;
};

using Dataset = std::vector<Utterance>;

Dataset generate_dataset(const SynthConfig& config, int count);

// Frame grid {0, f, 2f, ...} clipped to and terminated by the duration.
std::vector<double> frame_grid(const Utterance& utt, double frame_ms);

double sigmoid(double x);

// Analytic stand-in for a frozen translation model. Every query is a pure
// function of (config, utterance, t, n), so one instance may be shared by
// any number of threads.
class Oracle {
 public:
  explicit Oracle(SynthConfig config);

  const SynthConfig& config() const { return config_; }

  // P(correct next token | audio prefix t, correct prefix of n tokens).
  double correct_token_prob(const Utterance& utt, double t_s, std::size_t n) const;
  std::vector<double> logprob(const Utterance& utt, double t_s, std::size_t n) const;
  int greedy_token(const Utterance& utt, double t_s, std::size_t n) const;
  // log P(correct | full audio) - log P(correct | prefix t), in nats.
  double info_gain(const Utterance& utt, double t_s, std::size_t n) const;

  // Pre-projection feature parts: [embedding(s_{n+1}) | evidence | n/N].
  Eigen::VectorXd raw_features(const Utterance& utt, double t_s, std::size_t n) const;
  Eigen::VectorXd features(const Utterance& utt, double t_s, std::size_t n) const;

  // Earliest frame-grid time whose information gain is <= gain_threshold.
  double write_boundary(const Utterance& utt, std::size_t n, double gain_threshold) const;

  const Eigen::MatrixXd& token_embeddings() const { return token_embeddings_; }

 private:
  void check_index(const Utterance& utt, std::size_t n) const;
  double evidence_noise(const Utterance& utt, double t_s, std::size_t n) const;

  SynthConfig config_;
  Eigen::MatrixXd token_embeddings_;  // vocab_size x embed_dim
  Eigen::MatrixXd projection_;        // feature_dim x (embed_dim + 2)
};

// Line-delimited dataset records:
// {"id","duration_s","tokens","boundaries_s","ambiguous","aligned"}.
std::string utterance_to_json_line(const Utterance& utt);
Utterance utterance_from_json_line(const std::string& line);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace reina
