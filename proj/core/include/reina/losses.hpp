#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "reina/policy_net.hpp"

namespace reina {

// Which term drives q toward the information-gain label.
enum class PrimaryLoss { kCovariance, kMse };

std::string_view to_string(PrimaryLoss loss);
PrimaryLoss parse_primary_loss(std::string_view name);

struct LossWeights {
  double lambda_mono = 0.1;
  double lambda_l2 = 0.01;
  double lambda_align = 1.0;
  double tau = 0.5;
  double bn_epsilon = 1e-5;
  double mono_margin = 0.0;
  PrimaryLoss primary = PrimaryLoss::kCovariance;

  void validate() const;
};

struct LabeledExample {
  Eigen::VectorXd features;
  double t_audio = 0.0;
  std::size_t token_index = 0;
  double label_partial_logp = 0.0;  // log P(s | a_t)
  double label_full_logp = 0.0;     // log P(s | a_T)
  std::optional<double> t_star;
  bool aligned = false;
  // Features of the following token at the same audio prefix; feeds the
  // monotonicity hinge. Absent for the last token of an utterance.
  std::optional<Eigen::VectorXd> next_features;

  double partial_minus_full() const { return label_partial_logp - label_full_logp; }
  double info_gain() const { return label_full_logp - label_partial_logp; }
};

// (v - mean) / (population_std + epsilon).
std::vector<double> batch_normalize(std::span<const double> values, double epsilon);

// (1/B) sum q_i * BN[labels]_i with labels = log P(s|a_t) - log P(s|a_T).
double cov_loss(std::span<const double> q, std::span<const double> labels_partial_minus_full,
                double epsilon);
std::vector<double> cov_loss_grad(std::span<const double> q,
                                  std::span<const double> labels_partial_minus_full,
                                  double epsilon);

// sum_n max(0, q_n - q_{n+1} + margin) along a token sequence at fixed audio.
double mono_loss(std::span<const double> q_sequence, double margin = 0.0);

double l2_loss(std::span<const double> q);

// Target READ probability sigma((t_star - t_audio) / tau).
double align_target(double t_audio, double t_star, double tau);

struct MaskedLoss {
  double value = 0.0;
  bool all_masked = false;
};

// Mean binary cross-entropy of logits q against targets over entries whose
// mask is true.
MaskedLoss bce_align_loss(std::span<const double> q_logits, std::span<const double> targets,
                          const std::vector<bool>& mask);
std::vector<double> bce_align_loss_grad(std::span<const double> q_logits,
                                        std::span<const double> targets,
                                        const std::vector<bool>& mask);

double mse_label_loss(std::span<const double> q, std::span<const double> labels);

struct LossBreakdown {
  double total = 0.0;
  double cov = 0.0;  // covariance term, or the MSE term when primary == kMse
  double mono = 0.0;
  double l2 = 0.0;
  double align = 0.0;
  bool no_aligned_examples = false;
};

// Everything total_loss needs for one batch. `q_next[i]` is meaningful only
// where has_next[i] is set.
struct LossInputs {
  std::span<const double> q;
  std::span<const double> q_next;
  std::vector<bool> has_next;
  std::span<const double> labels_partial_minus_full;
  std::span<const double> align_targets;
  std::vector<bool> align_mask;
};

struct LossGradients {
  std::vector<double> dq;
  std::vector<double> dq_next;
};

LossBreakdown total_loss(PolicyVariant variant, const LossInputs& inputs,
                         const LossWeights& weights, LossGradients* grads = nullptr);

}  // namespace reina
