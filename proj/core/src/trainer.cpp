#include "reina/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reina/errors.hpp"
#include "text_format.hpp"

namespace reina {
namespace {

void check_finite(double value, const char* term, long step) {
  if (!std::isfinite(value)) throw NumericError(term, step, "value " + std::to_string(value));
}

// Picks `count` distinct indices from [0, total) in draw order.
std::vector<std::size_t> draw_distinct(std::size_t total, std::size_t count,
                                       std::mt19937_64& rng) {
  count = std::min(count, total);
  if (2 * count >= total) {
    std::vector<std::size_t> all(total);
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(count);
    return all;
  }
  std::uniform_int_distribution<std::size_t> dist(0, total - 1);
  std::vector<std::size_t> out;
  out.reserve(count);
  while (out.size() < count) {
    const std::size_t idx = dist(rng);
    if (std::find(out.begin(), out.end(), idx) == out.end()) out.push_back(idx);
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("batch_size", "must be >= 2 (batch normalization)");
  if (steps < 1) throw ConfigError("steps", "must be >= 1");
  if (!(lr >= 0)) throw ConfigError("lr", "must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("adam_betas", "beta1 must lie in [0, 1)");
  if (!(beta2 >= 0 && beta2 < 1)) throw ConfigError("adam_betas", "beta2 must lie in [0, 1)");
  if (!(adam_eps > 0)) throw ConfigError("adam_eps", "must be > 0");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay", "must be >= 0");
  if (warmup_steps < 0) throw ConfigError("warmup_steps", "must be >= 0");
  if (samples_per_utterance < 1) throw ConfigError("samples_per_utterance", "must be >= 1");
}

std::vector<LabeledExample> sample_batch(const Dataset& dataset, const Oracle& oracle,
                                         const TrainConfig& config, std::mt19937_64& rng) {
  if (dataset.empty()) throw ConfigError("dataset", "cannot sample from an empty dataset");
  std::uniform_int_distribution<std::size_t> utt_dist(0, dataset.size() - 1);
  const auto batch_size = static_cast<std::size_t>(config.batch_size);

  std::vector<LabeledExample> batch;
  batch.reserve(batch_size);
  while (batch.size() < batch_size) {
    const Utterance& utt = dataset[utt_dist(rng)];
    auto grid = frame_grid(utt, oracle.config().frame_ms);
    grid.erase(grid.begin());  // t = 0 is never a decision point
    const std::size_t n_tokens = utt.size();
    const std::size_t want =
        std::min(static_cast<std::size_t>(config.samples_per_utterance), batch_size - batch.size());
    for (std::size_t pair : draw_distinct(grid.size() * n_tokens, want, rng)) {
      const double t = grid[pair / n_tokens];
      const std::size_t n = pair % n_tokens;
      LabeledExample ex;
      ex.features = oracle.features(utt, t, n);
      ex.t_audio = t;
      ex.token_index = n;
      ex.label_partial_logp = std::log(oracle.correct_token_prob(utt, t, n));
      ex.label_full_logp = std::log(oracle.correct_token_prob(utt, utt.duration_s, n));
      ex.aligned = utt.aligned;
      if (utt.aligned) ex.t_star = utt.boundaries_s[n];
      if (n + 1 < n_tokens) ex.next_features = oracle.features(utt, t, n + 1);
      batch.push_back(std::move(ex));
    }
  }
  return batch;
}

BatchObjective evaluate_batch(const PolicyParams& params,
                              const std::vector<LabeledExample>& batch, PolicyVariant variant,
                              const LossWeights& weights, bool with_grad) {
  const std::size_t b = batch.size();
  if (b == 0) throw BatchError("empty training batch");
  std::vector<std::size_t> next_slot(b, 0);
  std::size_t n_next = 0;
  for (std::size_t i = 0; i < b; ++i)
    if (batch[i].next_features) next_slot[i] = b + n_next++;

  const int dim = params.config().input_dim;
  PolicyBatch pb{Eigen::MatrixXd(dim, static_cast<Eigen::Index>(b + n_next)),
                 Eigen::VectorXd(static_cast<Eigen::Index>(b + n_next))};
  for (std::size_t i = 0; i < b; ++i) {
    if (batch[i].features.size() != dim)
      throw ShapeError("example feature dimension does not match policy input_dim");
    pb.features.col(static_cast<Eigen::Index>(i)) = batch[i].features;
    pb.t_audio(static_cast<Eigen::Index>(i)) = batch[i].t_audio;
    if (batch[i].next_features) {
      pb.features.col(static_cast<Eigen::Index>(next_slot[i])) = *batch[i].next_features;
      pb.t_audio(static_cast<Eigen::Index>(next_slot[i])) = batch[i].t_audio;
    }
  }
  const Eigen::VectorXd q_all = forward_batch(params, pb, variant);

  std::vector<double> q(b), q_next(b, 0.0), labels(b), targets(b, 0.0);
  std::vector<bool> has_next(b), mask(b);
  for (std::size_t i = 0; i < b; ++i) {
    const auto& ex = batch[i];
    q[i] = q_all(static_cast<Eigen::Index>(i));
    has_next[i] = ex.next_features.has_value();
    if (has_next[i]) q_next[i] = q_all(static_cast<Eigen::Index>(next_slot[i]));
    labels[i] = ex.partial_minus_full();
    mask[i] = ex.aligned && ex.t_star.has_value();
    if (mask[i]) targets[i] = align_target(ex.t_audio, *ex.t_star, weights.tau);
  }

  LossInputs inputs{q, q_next, has_next, labels, targets, mask};
  LossGradients grads;
  BatchObjective out;
  out.loss = total_loss(variant, inputs, weights, with_grad ? &grads : nullptr);
  if (with_grad) {
    Eigen::VectorXd upstream = Eigen::VectorXd::Zero(q_all.size());
    for (std::size_t i = 0; i < b; ++i) {
      upstream(static_cast<Eigen::Index>(i)) = grads.dq[i];
      if (has_next[i]) upstream(static_cast<Eigen::Index>(next_slot[i])) = grads.dq_next[i];
    }
    out.grad = backward(params, pb, variant, upstream);
  }
  return out;
}

TrainReport train(const Dataset& dataset, const Oracle& oracle, const PolicyConfig& policy_config,
                  const TrainConfig& cfg, const LossWeights& weights,
                  const StepCallback& on_step) {
  cfg.validate();
  weights.validate();
  policy_config.validate();
  if (policy_config.input_dim != oracle.config().feature_dim)
    throw ConfigError("input_dim", "must equal the environment feature_dim (" +
                                       std::to_string(oracle.config().feature_dim) + ")");

  std::mt19937_64 rng(cfg.rng_seed);
  TrainReport report;
  report.params = PolicyParams::init(policy_config, rng());
  Eigen::VectorXd& theta = report.params.values();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(theta.size());
  report.records.reserve(static_cast<std::size_t>(cfg.steps));

  for (long step = 0; step < cfg.steps; ++step) {
    const auto batch = sample_batch(dataset, oracle, cfg, rng);
    BatchObjective obj = evaluate_batch(report.params, batch, cfg.variant, weights, true);

    check_finite(obj.loss.cov, weights.primary == PrimaryLoss::kMse ? "loss_mse" : "loss_cov",
                 step);
    check_finite(obj.loss.mono, "loss_mono", step);
    check_finite(obj.loss.l2, "loss_l2", step);
    check_finite(obj.loss.align, "loss_align", step);
    check_finite(obj.loss.total, "loss_total", step);
    if (!obj.grad.allFinite()) throw NumericError("gradient", step, "non-finite entries");
    if (obj.loss.no_aligned_examples) report.alignment_warning = true;

    StepRecord rec{step, obj.loss, obj.grad.norm()};
    report.records.push_back(rec);

    const double lr = cfg.warmup_steps > 0
                          ? cfg.lr * std::min(1.0, static_cast<double>(step + 1) / cfg.warmup_steps)
                          : cfg.lr;
    const double t = static_cast<double>(step + 1);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * obj.grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * obj.grad.cwiseProduct(obj.grad);
    const Eigen::VectorXd update =
        (m / c1).array() / ((v / c2).array().sqrt() + cfg.adam_eps);
    theta -= lr * (update + cfg.weight_decay * theta);
    if (!report.params.all_finite()) throw NumericError("params", step, "non-finite weights");

    if (on_step) on_step(rec);
  }
  return report;
}

double grad_check(const PolicyConfig& policy_config, const LossWeights& weights,
                  PolicyVariant variant, std::uint64_t seed) {
  SynthConfig env;
  env.feature_dim = policy_config.input_dim;
  env.tokens_per_utt_range = {2, 6};
  env.ambiguity_prob = 0.3;
  env.aligned_prob = 0.7;
  env.noise_std = 0.05;
  env.rng_seed = seed;
  const Oracle oracle(env);
  const Dataset data = generate_dataset(env, 8);

  TrainConfig tc;
  tc.batch_size = 32;
  tc.samples_per_utterance = 4;
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  const auto batch = sample_batch(data, oracle, tc, rng);

  PolicyParams params = PolicyParams::init(policy_config, rng());
  const Eigen::VectorXd analytic = evaluate_batch(params, batch, variant, weights, true).grad;

  constexpr double h = 1e-5;
  constexpr int kCoordinates = 128;
  std::uniform_int_distribution<Eigen::Index> coord(0, params.size() - 1);
  const int n_coords = static_cast<int>(std::min<Eigen::Index>(kCoordinates, params.size()));
  double worst = 0.0;
  for (int k = 0; k < n_coords; ++k) {
    const Eigen::Index i = params.size() <= kCoordinates ? k : coord(rng);
    const double saved = params.values()(i);
    params.values()(i) = saved + h;
    const double up = evaluate_batch(params, batch, variant, weights, false).loss.total;
    params.values()(i) = saved - h;
    const double down = evaluate_batch(params, batch, variant, weights, false).loss.total;
    params.values()(i) = saved;
    const double numeric = (up - down) / (2 * h);
    const double scale = std::max({std::abs(analytic(i)), std::abs(numeric), 1e-2});
    worst = std::max(worst, std::abs(analytic(i) - numeric) / scale);
  }
  return worst;
}

std::string training_csv(const TrainReport& report) {
  std::string out = "step,loss_total,loss_cov,loss_mono,loss_l2,loss_align,grad_norm\n";
  for (const auto& r : report.records) {
    out += std::to_string(r.step);
    for (double v : {r.loss.total, r.loss.cov, r.loss.mono, r.loss.l2, r.loss.align, r.grad_norm})
      out += "," + detail::format_double(v);
    out += "\n";
  }
  return out;
}

void save_training_csv(const TrainReport& report, const std::filesystem::path& path) {
  detail::write_text_file(path, training_csv(report));
}

}  // namespace reina
