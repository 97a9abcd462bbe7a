#include "reina/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "reina/errors.hpp"
#include "text_format.hpp"

namespace reina {
namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& section,
                    std::initializer_list<const char*> known) {
  if (!obj.is_object()) throw ConfigError(section, "must be a JSON object");
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key))
      throw ConfigError(section.empty() ? key : section + "." + key, "unknown field");
}

template <typename T>
void read_field(const json& obj, const char* key, T& out, const std::string& section) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(section + "." + key, e.what());
  }
}

void read_synth(const json& j, SynthConfig& s) {
  reject_unknown(j, "synth",
                 {"vocab_size", "frame_ms", "tokens_per_utt_range", "mean_token_gap_s",
                  "gap_jitter_s", "p_min", "p_max", "ramp_s", "ambiguity_prob", "aligned_prob",
                  "embed_dim", "feature_dim", "noise_std", "rng_seed"});
  read_field(j, "vocab_size", s.vocab_size, "synth");
  read_field(j, "frame_ms", s.frame_ms, "synth");
  if (j.contains("tokens_per_utt_range")) {
    std::vector<int> r;
    read_field(j, "tokens_per_utt_range", r, "synth");
    if (r.size() != 2) throw ConfigError("synth.tokens_per_utt_range", "expected [min, max]");
    s.tokens_per_utt_range = {r[0], r[1]};
  }
  read_field(j, "mean_token_gap_s", s.mean_token_gap_s, "synth");
  read_field(j, "gap_jitter_s", s.gap_jitter_s, "synth");
  read_field(j, "p_min", s.p_min, "synth");
  read_field(j, "p_max", s.p_max, "synth");
  read_field(j, "ramp_s", s.ramp_s, "synth");
  read_field(j, "ambiguity_prob", s.ambiguity_prob, "synth");
  read_field(j, "aligned_prob", s.aligned_prob, "synth");
  read_field(j, "embed_dim", s.embed_dim, "synth");
  read_field(j, "feature_dim", s.feature_dim, "synth");
  read_field(j, "noise_std", s.noise_std, "synth");
  read_field(j, "rng_seed", s.rng_seed, "synth");
}

void read_train(const json& j, TrainConfig& t) {
  reject_unknown(j, "train",
                 {"batch_size", "steps", "lr", "adam_betas", "adam_eps", "weight_decay",
                  "warmup_steps", "samples_per_utterance", "rng_seed"});
  read_field(j, "batch_size", t.batch_size, "train");
  read_field(j, "steps", t.steps, "train");
  read_field(j, "lr", t.lr, "train");
  if (j.contains("adam_betas")) {
    std::vector<double> b;
    read_field(j, "adam_betas", b, "train");
    if (b.size() != 2) throw ConfigError("train.adam_betas", "expected [beta1, beta2]");
    t.beta1 = b[0];
    t.beta2 = b[1];
  }
  read_field(j, "adam_eps", t.adam_eps, "train");
  read_field(j, "weight_decay", t.weight_decay, "train");
  read_field(j, "warmup_steps", t.warmup_steps, "train");
  read_field(j, "samples_per_utterance", t.samples_per_utterance, "train");
  read_field(j, "rng_seed", t.rng_seed, "train");
}

void read_loss(const json& j, LossWeights& w) {
  reject_unknown(j, "loss",
                 {"lambda_mono", "lambda_l2", "lambda_align", "tau", "bn_epsilon", "mono_margin",
                  "primary"});
  read_field(j, "lambda_mono", w.lambda_mono, "loss");
  read_field(j, "lambda_l2", w.lambda_l2, "loss");
  read_field(j, "lambda_align", w.lambda_align, "loss");
  read_field(j, "tau", w.tau, "loss");
  read_field(j, "bn_epsilon", w.bn_epsilon, "loss");
  read_field(j, "mono_margin", w.mono_margin, "loss");
  if (j.contains("primary")) {
    std::string p;
    read_field(j, "primary", p, "loss");
    w.primary = parse_primary_loss(p);
  }
}

void read_stream(const json& j, StreamConfig& s) {
  reject_unknown(j, "stream", {"chunk_ms", "alpha", "max_tokens"});
  read_field(j, "chunk_ms", s.chunk_ms, "stream");
  read_field(j, "alpha", s.alpha, "stream");
  read_field(j, "max_tokens", s.max_tokens, "stream");
}

std::string sanitize_label(const std::filesystem::path& dir) {
  auto p = dir;
  if (!p.has_filename()) p = p.parent_path();
  std::string label = p.filename().string();
  return label.empty() ? "run" : label;
}

std::vector<ParetoPoint> read_pareto(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_pareto_csv(buf.str());
}

std::filesystem::path log_file_name(const std::filesystem::path& dir, std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof name, "alpha_%03zu.jsonl", index);
  return dir / "logs" / name;
}

}  // namespace

void ExperimentConfig::validate() const {
  synth.validate();
  if (count < 1) throw ConfigError("count", "must be >= 1");
  policy_config().validate();
  train.validate();
  loss.validate();
  stream.validate();
  if (auto_alphas < 1) throw ConfigError("auto_alphas", "must be >= 1");
  if (bins < 1) throw ConfigError("bins", "must be >= 1");
  if (info_gain_utterance < 0) throw ConfigError("info_gain_utterance", "must be >= 0");
  for (double a : alphas)
    if (std::isnan(a)) throw ConfigError("alphas", "must not contain NaN");
}

std::filesystem::path ExperimentConfig::dataset_path() const {
  return paths.dataset.empty() ? paths.out_dir / "dataset.jsonl" : paths.dataset;
}

std::filesystem::path ExperimentConfig::checkpoint_path() const {
  return paths.checkpoint.empty() ? paths.out_dir / "policy.ckpt" : paths.checkpoint;
}

PolicyConfig ExperimentConfig::policy_config() const {
  PolicyConfig cfg = policy_config_for(variant, synth.feature_dim, hidden_dims);
  cfg.time_base = time_base;
  return cfg;
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("config", std::string("not valid JSON: ") + e.what());
  }
  reject_unknown(j, "",
                 {"paths", "count", "synth", "policy", "train", "loss", "stream", "alphas",
                  "auto_alphas", "band", "bins", "info_gain_utterance", "variant"});
  ExperimentConfig cfg;
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    reject_unknown(p, "paths", {"dataset", "checkpoint", "out_dir"});
    std::string s;
    if (p.contains("dataset")) read_field(p, "dataset", s, "paths"), cfg.paths.dataset = s;
    if (p.contains("checkpoint"))
      read_field(p, "checkpoint", s, "paths"), cfg.paths.checkpoint = s;
    if (p.contains("out_dir")) read_field(p, "out_dir", s, "paths"), cfg.paths.out_dir = s;
  }
  read_field(j, "count", cfg.count, "");
  if (j.contains("synth")) read_synth(j.at("synth"), cfg.synth);
  if (j.contains("policy")) {
    const auto& p = j.at("policy");
    reject_unknown(p, "policy", {"hidden_dims", "time_base"});
    read_field(p, "hidden_dims", cfg.hidden_dims, "policy");
    read_field(p, "time_base", cfg.time_base, "policy");
  }
  if (j.contains("train")) read_train(j.at("train"), cfg.train);
  if (j.contains("loss")) read_loss(j.at("loss"), cfg.loss);
  if (j.contains("stream")) read_stream(j.at("stream"), cfg.stream);
  read_field(j, "alphas", cfg.alphas, "");
  read_field(j, "auto_alphas", cfg.auto_alphas, "");
  if (j.contains("band")) {
    const auto& b = j.at("band");
    reject_unknown(b, "band", {"x", "y"});
    read_field(b, "x", cfg.band.x, "band");
    read_field(b, "y", cfg.band.y, "band");
  }
  read_field(j, "bins", cfg.bins, "");
  read_field(j, "info_gain_utterance", cfg.info_gain_utterance, "");
  if (j.contains("variant")) {
    std::string v;
    read_field(j, "variant", v, "");
    cfg.variant = parse_variant(v);
  }
  cfg.train.variant = cfg.variant;
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open config");
  std::stringstream buf;
  buf << in.rdbuf();
  return experiment_config_from_json(buf.str());
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["paths"] = {{"dataset", c.dataset_path().string()},
                {"checkpoint", c.checkpoint_path().string()},
                {"out_dir", c.paths.out_dir.string()}};
  j["count"] = c.count;
  const auto& s = c.synth;
  j["synth"] = {{"vocab_size", s.vocab_size},
                {"frame_ms", s.frame_ms},
                {"tokens_per_utt_range", {s.tokens_per_utt_range.min, s.tokens_per_utt_range.max}},
                {"mean_token_gap_s", s.mean_token_gap_s},
                {"gap_jitter_s", s.gap_jitter_s},
                {"p_min", s.p_min},
                {"p_max", s.p_max},
                {"ramp_s", s.ramp_s},
                {"ambiguity_prob", s.ambiguity_prob},
                {"aligned_prob", s.aligned_prob},
                {"embed_dim", s.embed_dim},
                {"feature_dim", s.feature_dim},
                {"noise_std", s.noise_std},
                {"rng_seed", s.rng_seed}};
  j["policy"] = {{"hidden_dims", c.hidden_dims}, {"time_base", c.time_base}};
  const auto& t = c.train;
  j["train"] = {{"batch_size", t.batch_size},
                {"steps", t.steps},
                {"lr", t.lr},
                {"adam_betas", {t.beta1, t.beta2}},
                {"adam_eps", t.adam_eps},
                {"weight_decay", t.weight_decay},
                {"warmup_steps", t.warmup_steps},
                {"samples_per_utterance", t.samples_per_utterance},
                {"rng_seed", t.rng_seed}};
  const auto& w = c.loss;
  j["loss"] = {{"lambda_mono", w.lambda_mono}, {"lambda_l2", w.lambda_l2},
               {"lambda_align", w.lambda_align}, {"tau", w.tau},
               {"bn_epsilon", w.bn_epsilon},     {"mono_margin", w.mono_margin},
               {"primary", std::string(to_string(w.primary))}};
  j["stream"] = {{"chunk_ms", c.stream.chunk_ms},
                 {"alpha", c.stream.alpha},
                 {"max_tokens", c.stream.max_tokens}};
  j["alphas"] = c.alphas;
  j["auto_alphas"] = c.auto_alphas;
  j["band"] = {{"x", c.band.x}, {"y", c.band.y}};
  j["bins"] = c.bins;
  j["info_gain_utterance"] = c.info_gain_utterance;
  j["variant"] = std::string(to_string(c.variant));
  return j.dump(2);
}

GenResult cmd_gen(const ExperimentConfig& config, std::ostream& log) {
  config.synth.validate();
  if (config.count < 1) throw ConfigError("count", "must be >= 1");
  const Dataset data = generate_dataset(config.synth, config.count);
  const auto path = config.dataset_path();
  save_dataset(data, path);
  log << "wrote " << data.size() << " utterances (seed " << config.synth.rng_seed << ") to "
      << path.string() << "\n";
  return {path, static_cast<int>(data.size()), config.synth.rng_seed};
}

TrainResult cmd_train(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  const Dataset data = load_dataset(config.dataset_path());
  if (uses_alignment_loss(config.variant) &&
      std::none_of(data.begin(), data.end(), [](const Utterance& u) { return u.aligned; })) {
    log << "warning: " << to_string(config.variant)
        << " requested but the dataset has no aligned utterances; alignment term will be 0\n";
  }
  const Oracle oracle(config.synth);
  TrainConfig tc = config.train;
  tc.variant = config.variant;

  TrainResult out;
  out.report = train(data, oracle, config.policy_config(), tc, config.loss);
  out.checkpoint = config.checkpoint_path();
  out.csv = config.paths.out_dir / "train.csv";
  save_params(out.checkpoint, out.report.params, config.variant);
  save_training_csv(out.report, out.csv);
  const auto& first = out.report.records.front().loss;
  const auto& last = out.report.records.back().loss;
  log << "trained " << to_string(config.variant) << " for " << out.report.records.size()
      << " steps: loss " << first.total << " -> " << last.total << "\n"
      << "checkpoint " << out.checkpoint.string() << ", trace " << out.csv.string() << "\n";
  return out;
}

SimulateResult cmd_simulate(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  const Dataset data = load_dataset(config.dataset_path());
  const Checkpoint ckpt = load_params(config.checkpoint_path());
  const Oracle oracle(config.synth);
  std::vector<EmissionLog> logs;
  for (const auto& utt : data)
    logs.push_back(simulate(oracle, ckpt.params, utt, ckpt.variant, config.stream));
  SimulateResult out;
  out.logs = config.paths.out_dir / "emissions.jsonl";
  save_emission_logs(logs, out.logs);
  out.point = evaluate_logs(config.stream.alpha, logs, data);
  log << "alpha " << out.point.alpha << ": LAAL " << out.point.mean_laal_s << " s, BLEU "
      << out.point.quality << ", read loops " << out.point.read_loop_pct << "%\n";
  return out;
}

SweepOutput cmd_sweep(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  const Dataset data = load_dataset(config.dataset_path());
  const Checkpoint ckpt = load_params(config.checkpoint_path());
  const Oracle oracle(config.synth);
  std::vector<double> alphas = config.alphas;
  if (alphas.empty())
    alphas = quantile_alphas(oracle, ckpt.params, data, ckpt.variant, config.stream,
                             config.auto_alphas);
  const SweepResult result = sweep(oracle, ckpt.params, data, ckpt.variant, alphas, config.stream);

  SweepOutput out;
  out.points = result.points;
  out.pareto_csv = config.paths.out_dir / "pareto.csv";
  detail::write_text_file(out.pareto_csv, pareto_csv(result.points));
  for (std::size_t k = 0; k < result.logs.size(); ++k) {
    const auto path = log_file_name(config.paths.out_dir, k);
    save_emission_logs(result.logs[k], path);
    out.log_files.push_back(path);
  }
  for (const auto& p : result.points)
    log << "alpha " << p.alpha << ": LAAL " << p.mean_laal_s << " s, BLEU " << p.quality
        << ", read loops " << p.read_loop_pct << "%\n";
  return out;
}

std::string info_gain_grid_csv(const Oracle& oracle, const Utterance& utt) {
  std::string out = "t_s,token_index,info_gain\n";
  for (double t : frame_grid(utt, oracle.config().frame_ms)) {
    for (std::size_t n = 0; n < utt.size(); ++n) {
      out += detail::format_double(t) + "," + std::to_string(n) + "," +
             detail::format_double(oracle.info_gain(utt, t, n)) + "\n";
    }
  }
  return out;
}

ReportOutput cmd_report(const ExperimentConfig& config,
                        const std::vector<std::filesystem::path>& run_dirs, std::ostream& log) {
  config.validate();
  if (run_dirs.empty()) throw ConfigError("runs", "report needs at least one sweep directory");
  const Dataset data = load_dataset(config.dataset_path());
  const Oracle oracle(config.synth);

  ReportOutput out;
  const auto offline = offline_decode(oracle, data);
  out.offline_quality = evaluate_logs(0.0, offline, data).quality;

  std::vector<std::vector<ParetoPoint>> curves;
  for (const auto& dir : run_dirs) curves.push_back(read_pareto(dir / "pareto.csv"));

  out.band = config.band;
  if (!(out.band.x < out.band.y)) {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (const auto& c : curves) {
      if (c.empty()) throw MetricError("empty pareto curve");
      const auto [mn, mx] = std::minmax_element(
          c.begin(), c.end(),
          [](const ParetoPoint& a, const ParetoPoint& b) { return a.mean_laal_s < b.mean_laal_s; });
      lo = std::max(lo, mn->mean_laal_s);
      hi = std::min(hi, mx->mean_laal_s);
    }
    if (!(lo < hi))
      throw MetricError("runs share no latency range; pass an explicit band");
    out.band = {lo, hi};
  }

  for (std::size_t r = 0; r < run_dirs.size(); ++r) {
    ReportRun run;
    run.label = sanitize_label(run_dirs[r]);
    const auto& points = curves[r];
    run.nose = nose(points, out.offline_quality, out.band);

    // Latency profile at the operating point nearest the band centre.
    const double mid = 0.5 * (out.band.x + out.band.y);
    std::size_t best = 0;
    for (std::size_t k = 1; k < points.size(); ++k)
      if (std::abs(points[k].mean_laal_s - mid) < std::abs(points[best].mean_laal_s - mid))
        best = k;
    const auto logs = load_emission_logs(log_file_name(run_dirs[r], best));
    const auto bins = latency_vs_position(logs, data, config.bins);

    const auto dir = config.paths.out_dir / run.label;
    run.nose_csv = dir / "nose.csv";
    run.latency_bins_csv = dir / "latency_bins.csv";
    detail::write_text_file(run.nose_csv, "band_x,band_y,nose\n" +
                                              detail::format_double(out.band.x) + "," +
                                              detail::format_double(out.band.y) + "," +
                                              detail::format_double(run.nose) + "\n");
    detail::write_text_file(run.latency_bins_csv, latency_bins_csv(bins));
    log << run.label << ": NoSE " << run.nose << " in [" << out.band.x << ", " << out.band.y
        << "] s\n";
    out.runs.push_back(std::move(run));
  }

  const auto idx = static_cast<std::size_t>(config.info_gain_utterance);
  if (idx >= data.size())
    throw ConfigError("info_gain_utterance", "index beyond dataset size " +
                                                 std::to_string(data.size()));
  out.info_gain_csv = config.paths.out_dir / "info_gain_grid.csv";
  detail::write_text_file(out.info_gain_csv, info_gain_grid_csv(oracle, data[idx]));
  log << "offline BLEU " << out.offline_quality << "\n";
  return out;
}

}  // namespace reina
