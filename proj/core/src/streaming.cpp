#include "reina/streaming.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "json.hpp"
#include "reina/errors.hpp"
#include "text_format.hpp"

namespace reina {

void StreamConfig::validate() const {
  if (!(chunk_ms > 0)) throw ConfigError("chunk_ms", "must be > 0");
  if (max_tokens < 0) throw ConfigError("max_tokens", "must be >= 0 (0 = 4 * N)");
  if (std::isnan(alpha)) throw ConfigError("alpha", "must not be NaN");
}

ThresholdPolicy make_network_policy(const Oracle& oracle, const PolicyParams& params,
                                    PolicyVariant variant, double alpha) {
  return ThresholdPolicy(
      [&oracle, &params, variant](const DecisionState& s) {
        return forward(params, oracle.features(s.utt, s.t_s, s.n), s.t_s, variant);
      },
      alpha);
}

ThresholdPolicy make_oracle_policy(const Oracle& oracle, double alpha) {
  return ThresholdPolicy(
      [&oracle](const DecisionState& s) { return oracle.info_gain(s.utt, s.t_s, s.n); }, alpha);
}

WaitKPolicy::WaitKPolicy(int k) : k_(k) {
  if (k < 0) throw ConfigError("k", "wait-k needs k >= 0");
}

bool WaitKPolicy::read(const DecisionState& state) const {
  return static_cast<long>(state.chunks_read) < static_cast<long>(k_) + static_cast<long>(state.n);
}

std::unique_ptr<ReadPolicy> wait_k_policy(int k) { return std::make_unique<WaitKPolicy>(k); }

EmissionLog simulate(const Oracle& oracle, const ReadPolicy& policy, const Utterance& utt,
                     const StreamConfig& config) {
  config.validate();
  const double T = utt.duration_s;
  const std::size_t n_tokens = utt.size();
  const std::size_t cap =
      config.max_tokens > 0 ? static_cast<std::size_t>(config.max_tokens) : 4 * n_tokens;

  EmissionLog log;
  log.utt_id = utt.id;
  log.duration_s = T;
  int chunks = 1;
  auto chunk_time = [&](int k) { return std::min(k * config.chunk_ms / 1000.0, T); };
  double t = chunk_time(chunks);
  std::size_t n = 0;
  while (n < n_tokens) {
    if (log.emissions.size() >= cap) {
      log.truncated = true;
      break;
    }
    if (t < T && policy.read(DecisionState{utt, t, n, chunks})) {
      t = chunk_time(++chunks);
      continue;
    }
    const bool forced = t >= T;
    log.emissions.push_back({oracle.greedy_token(utt, t, n), t, forced});
    log.forced_tail = log.forced_tail || forced;
    ++n;
  }
  return log;
}

EmissionLog simulate(const Oracle& oracle, const PolicyParams& params, const Utterance& utt,
                     PolicyVariant variant, const StreamConfig& config) {
  return simulate(oracle, make_network_policy(oracle, params, variant, config.alpha), utt, config);
}

ParetoPoint evaluate_logs(double alpha, std::span<const EmissionLog> logs,
                          const Dataset& dataset) {
  if (logs.empty()) throw MetricError("no emission logs to evaluate");
  std::unordered_map<std::string, const Utterance*> by_id;
  for (const auto& utt : dataset) by_id[utt.id] = &utt;
  std::vector<TokenSeq> hyps, refs;
  double laal_sum = 0.0;
  for (const auto& log : logs) {
    const auto it = by_id.find(log.utt_id);
    if (it == by_id.end()) throw MetricError("no utterance '" + log.utt_id + "' in dataset");
    hyps.push_back(log.tokens());
    refs.push_back(it->second->target_tokens);
    laal_sum += laal(log, it->second->size());
  }
  ParetoPoint p;
  p.alpha = alpha;
  p.mean_laal_s = laal_sum / static_cast<double>(logs.size());
  p.quality = bleu(hyps, refs);
  p.read_loop_pct = read_loop_pct(logs);
  return p;
}

SweepResult sweep(const Oracle& oracle, const PolicyFactory& factory, const Dataset& dataset,
                  std::span<const double> alphas, const StreamConfig& config) {
  if (alphas.empty()) throw ConfigError("alphas", "sweep needs at least one threshold");
  if (dataset.empty()) throw ConfigError("dataset", "sweep needs at least one utterance");
  std::vector<double> sorted(alphas.begin(), alphas.end());
  std::sort(sorted.begin(), sorted.end());

  // Logs are reduced in dataset order, which is sorted by utterance id for
  // generated data; evaluation never depends on the order they were produced.
  SweepResult result;
  for (double alpha : sorted) {
    const auto policy = factory(alpha);
    std::vector<EmissionLog> logs;
    logs.reserve(dataset.size());
    for (const auto& utt : dataset) logs.push_back(simulate(oracle, *policy, utt, config));
    result.points.push_back(evaluate_logs(alpha, logs, dataset));
    result.logs.push_back(std::move(logs));
  }
  return result;
}

SweepResult sweep(const Oracle& oracle, const PolicyParams& params, const Dataset& dataset,
                  PolicyVariant variant, std::span<const double> alphas,
                  const StreamConfig& config) {
  return sweep(
      oracle,
      [&](double alpha) -> std::unique_ptr<ReadPolicy> {
        return std::make_unique<ThresholdPolicy>(
            make_network_policy(oracle, params, variant, alpha));
      },
      dataset, alphas, config);
}

std::vector<double> quantile_alphas(const Oracle& oracle, const PolicyParams& params,
                                    const Dataset& dataset, PolicyVariant variant,
                                    const StreamConfig& config, int count) {
  config.validate();
  if (count < 1) throw ConfigError("auto_alphas", "must be >= 1");
  std::vector<double> scores;
  for (const auto& utt : dataset) {
    for (int k = 1;; ++k) {
      const double t = k * config.chunk_ms / 1000.0;
      if (t >= utt.duration_s) break;
      for (std::size_t n = 0; n < utt.size(); ++n)
        scores.push_back(forward(params, oracle.features(utt, t, n), t, variant));
    }
  }
  if (scores.empty()) throw ConfigError("dataset", "no decision points below the source duration");
  std::sort(scores.begin(), scores.end());
  std::vector<double> out;
  for (int i = 0; i < count; ++i) {
    const double level = count == 1 ? 0.5 : 0.05 + 0.9 * i / (count - 1);
    const double pos = level * static_cast<double>(scores.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, scores.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    out.push_back(scores[lo] + frac * (scores[hi] - scores[lo]));
  }
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<EmissionLog> offline_decode(const Oracle& oracle, const Dataset& dataset) {
  std::vector<EmissionLog> logs;
  logs.reserve(dataset.size());
  for (const auto& utt : dataset) {
    EmissionLog log;
    log.utt_id = utt.id;
    log.duration_s = utt.duration_s;
    for (std::size_t n = 0; n < utt.size(); ++n)
      log.emissions.push_back({oracle.greedy_token(utt, utt.duration_s, n), utt.duration_s, true});
    log.forced_tail = true;
    logs.push_back(std::move(log));
  }
  return logs;
}

std::string emission_log_to_json_line(const EmissionLog& log) {
  const auto tokens = log.tokens();
  const auto delays = log.delays();
  std::string line = "{\"utt_id\":" + detail::json_string(log.utt_id);
  line += ",\"tokens\":" + detail::json_int_array(tokens);
  line += ",\"delays_s\":" + detail::json_number_array(delays);
  line += ",\"T\":" + detail::format_double(log.duration_s);
  line += std::string(",\"forced_tail\":") + (log.forced_tail ? "true" : "false");
  line += std::string(",\"read_loop\":") + (detect_read_loop(log) ? "true" : "false") + "}";
  return line;
}

EmissionLog emission_log_from_json_line(const std::string& line) {
  EmissionLog log;
  try {
    const auto j = nlohmann::json::parse(line);
    log.utt_id = j.at("utt_id").get<std::string>();
    const auto tokens = j.at("tokens").get<std::vector<int>>();
    const auto delays = j.at("delays_s").get<std::vector<double>>();
    log.duration_s = j.at("T").get<double>();
    log.forced_tail = j.at("forced_tail").get<bool>();
    if (tokens.size() != delays.size())
      throw MetricError("emission log " + log.utt_id + " has mismatched tokens/delays");
    for (std::size_t i = 0; i < tokens.size(); ++i)
      log.emissions.push_back({tokens[i], delays[i], delays[i] >= log.duration_s});
  } catch (const nlohmann::json::exception& e) {
    throw MetricError(std::string("malformed emission log record: ") + e.what());
  }
  return log;
}

void save_emission_logs(std::span<const EmissionLog> logs, const std::filesystem::path& path) {
  std::string out;
  for (const auto& log : logs) out += emission_log_to_json_line(log) + "\n";
  detail::write_text_file(path, out);
}

std::vector<EmissionLog> load_emission_logs(const std::filesystem::path& path) {
  std::vector<EmissionLog> logs;
  for (const auto& line : detail::read_lines(path)) logs.push_back(emission_log_from_json_line(line));
  return logs;
}

}  // namespace reina
