#include "reina/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reina/errors.hpp"
#include "reina/synth_env.hpp"

namespace reina {
namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw ShapeError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                     std::to_string(b) + ")");
}

// -[y log s(q) + (1-y) log(1-s(q))] in the overflow-free form.
double bce_term(double q, double y) {
  return std::max(q, 0.0) - q * y + std::log1p(std::exp(-std::abs(q)));
}

}  // namespace

std::string_view to_string(PrimaryLoss loss) {
  return loss == PrimaryLoss::kMse ? "mse" : "cov";
}

PrimaryLoss parse_primary_loss(std::string_view name) {
  if (name == "cov" || name == "covariance") return PrimaryLoss::kCovariance;
  if (name == "mse") return PrimaryLoss::kMse;
  throw ConfigError("primary_loss", "expected 'cov' or 'mse', got '" + std::string(name) + "'");
}

void LossWeights::validate() const {
  if (!(lambda_mono >= 0)) throw ConfigError("lambda_mono", "must be >= 0");
  if (!(lambda_l2 >= 0)) throw ConfigError("lambda_l2", "must be >= 0");
  if (!(lambda_align >= 0)) throw ConfigError("lambda_align", "must be >= 0");
  if (!(tau > 0)) throw ConfigError("tau", "must be > 0");
  if (!(bn_epsilon > 0)) throw ConfigError("bn_epsilon", "must be > 0");
  if (!(mono_margin >= 0)) throw ConfigError("mono_margin", "must be >= 0");
}

std::vector<double> batch_normalize(std::span<const double> values, double epsilon) {
  if (values.size() < 2)
    throw BatchError("batch normalization needs at least 2 values, got " +
                     std::to_string(values.size()));
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double denom = std::sqrt(var / n) + epsilon;
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - mean) / denom;
  return out;
}

double cov_loss(std::span<const double> q, std::span<const double> labels_partial_minus_full,
                double epsilon) {
  require_same_length(q.size(), labels_partial_minus_full.size(), "cov_loss");
  const auto bn = batch_normalize(labels_partial_minus_full, epsilon);
  double sum = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) sum += q[i] * bn[i];
  return sum / static_cast<double>(q.size());
}

std::vector<double> cov_loss_grad(std::span<const double> q,
                                  std::span<const double> labels_partial_minus_full,
                                  double epsilon) {
  require_same_length(q.size(), labels_partial_minus_full.size(), "cov_loss");
  auto bn = batch_normalize(labels_partial_minus_full, epsilon);
  for (double& v : bn) v /= static_cast<double>(q.size());
  return bn;
}

double mono_loss(std::span<const double> q_sequence, double margin) {
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < q_sequence.size(); ++i)
    sum += std::max(0.0, q_sequence[i] - q_sequence[i + 1] + margin);
  return sum;
}

double l2_loss(std::span<const double> q) {
  if (q.empty()) return 0.0;
  double sum = 0.0;
  for (double v : q) sum += v * v;
  return sum / static_cast<double>(q.size());
}

double align_target(double t_audio, double t_star, double tau) {
  if (!(tau > 0)) throw ConfigError("tau", "must be > 0");
  return sigmoid((t_star - t_audio) / tau);
}

MaskedLoss bce_align_loss(std::span<const double> q_logits, std::span<const double> targets,
                          const std::vector<bool>& mask) {
  require_same_length(q_logits.size(), targets.size(), "bce_align_loss");
  require_same_length(q_logits.size(), mask.size(), "bce_align_loss mask");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < q_logits.size(); ++i) {
    if (!mask[i]) continue;
    sum += bce_term(q_logits[i], targets[i]);
    ++count;
  }
  if (count == 0) return {0.0, true};
  return {sum / static_cast<double>(count), false};
}

std::vector<double> bce_align_loss_grad(std::span<const double> q_logits,
                                        std::span<const double> targets,
                                        const std::vector<bool>& mask) {
  require_same_length(q_logits.size(), targets.size(), "bce_align_loss");
  require_same_length(q_logits.size(), mask.size(), "bce_align_loss mask");
  const auto count = static_cast<double>(std::count(mask.begin(), mask.end(), true));
  std::vector<double> grad(q_logits.size(), 0.0);
  if (count == 0) return grad;
  for (std::size_t i = 0; i < q_logits.size(); ++i)
    if (mask[i]) grad[i] = (sigmoid(q_logits[i]) - targets[i]) / count;
  return grad;
}

double mse_label_loss(std::span<const double> q, std::span<const double> labels) {
  require_same_length(q.size(), labels.size(), "mse_label_loss");
  if (q.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) sum += (q[i] - labels[i]) * (q[i] - labels[i]);
  return sum / static_cast<double>(q.size());
}

LossBreakdown total_loss(PolicyVariant variant, const LossInputs& in, const LossWeights& w,
                         LossGradients* grads) {
  const std::size_t batch = in.q.size();
  require_same_length(batch, in.labels_partial_minus_full.size(), "total_loss labels");
  require_same_length(batch, in.q_next.size(), "total_loss q_next");
  require_same_length(batch, in.has_next.size(), "total_loss has_next");
  const double inv_b = 1.0 / static_cast<double>(batch);

  LossBreakdown out;
  std::vector<double> dq(batch, 0.0);
  std::vector<double> dq_next(batch, 0.0);

  if (w.primary == PrimaryLoss::kCovariance) {
    out.cov = cov_loss(in.q, in.labels_partial_minus_full, w.bn_epsilon);
    const auto g = cov_loss_grad(in.q, in.labels_partial_minus_full, w.bn_epsilon);
    for (std::size_t i = 0; i < batch; ++i) dq[i] += g[i];
  } else {
    // Regress on the gain itself so that high q keeps meaning READ.
    std::vector<double> gain(batch);
    for (std::size_t i = 0; i < batch; ++i) gain[i] = -in.labels_partial_minus_full[i];
    out.cov = mse_label_loss(in.q, gain);
    for (std::size_t i = 0; i < batch; ++i) dq[i] += 2.0 * (in.q[i] - gain[i]) * inv_b;
  }

  for (std::size_t i = 0; i < batch; ++i) {
    if (!in.has_next[i]) continue;
    const double pair[2] = {in.q[i], in.q_next[i]};
    out.mono += mono_loss(pair, w.mono_margin);
    if (in.q[i] - in.q_next[i] + w.mono_margin > 0) {
      dq[i] += w.lambda_mono * inv_b;
      dq_next[i] -= w.lambda_mono * inv_b;
    }
  }
  out.mono *= inv_b;

  out.l2 = l2_loss(in.q);
  for (std::size_t i = 0; i < batch; ++i) dq[i] += w.lambda_l2 * 2.0 * in.q[i] * inv_b;

  out.total = out.cov + w.lambda_mono * out.mono + w.lambda_l2 * out.l2;

  if (uses_alignment_loss(variant)) {
    require_same_length(batch, in.align_targets.size(), "total_loss align targets");
    require_same_length(batch, in.align_mask.size(), "total_loss align mask");
    const auto align = bce_align_loss(in.q, in.align_targets, in.align_mask);
    out.align = align.value;
    out.no_aligned_examples = align.all_masked;
    if (!align.all_masked) {
      const auto g = bce_align_loss_grad(in.q, in.align_targets, in.align_mask);
      for (std::size_t i = 0; i < batch; ++i) dq[i] += w.lambda_align * g[i];
    }
    out.total += w.lambda_align * out.align;
  }

  if (grads) {
    grads->dq = std::move(dq);
    grads->dq_next = std::move(dq_next);
  }
  return out;
}

}  // namespace reina
