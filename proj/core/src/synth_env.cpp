#include "reina/synth_env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "json.hpp"
#include "reina/errors.hpp"
#include "text_format.hpp"

namespace reina {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Stream identifiers so that embeddings, projection and data never share draws.
constexpr std::uint64_t kEmbeddingStream = 0x656d6265644e4e31ULL;
constexpr std::uint64_t kProjectionStream = 0x70726f6a4e4e4e32ULL;
constexpr std::uint64_t kNoiseStream = 0x6e6f6973654e4e33ULL;

double snap_up(double seconds, double frame_ms) {
  const double frames = std::ceil(seconds * 1000.0 / frame_ms - 1e-9);
  return frames * frame_ms / 1000.0;
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void SynthConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("vocab_size", "must be >= 2");
  if (!(frame_ms > 0)) throw ConfigError("frame_ms", "must be > 0");
  if (tokens_per_utt_range.min < 1) throw ConfigError("tokens_per_utt_range", "min must be >= 1");
  if (tokens_per_utt_range.max < tokens_per_utt_range.min)
    throw ConfigError("tokens_per_utt_range", "max must be >= min");
  if (!(mean_token_gap_s > 0)) throw ConfigError("mean_token_gap_s", "must be > 0");
  if (!(gap_jitter_s >= 0)) throw ConfigError("gap_jitter_s", "must be >= 0");
  if (!(p_min > 0 && p_min < 1)) throw ConfigError("p_min", "must lie in (0, 1)");
  if (!(p_max > p_min && p_max < 1)) throw ConfigError("p_max", "must lie in (p_min, 1)");
  if (!(ramp_s > 0)) throw ConfigError("ramp_s", "must be > 0");
  if (!(ambiguity_prob >= 0 && ambiguity_prob <= 1))
    throw ConfigError("ambiguity_prob", "must lie in [0, 1]");
  if (!(aligned_prob >= 0 && aligned_prob <= 1))
    throw ConfigError("aligned_prob", "must lie in [0, 1]");
  if (embed_dim < 1) throw ConfigError("embed_dim", "must be >= 1");
  if (feature_dim < 1) throw ConfigError("feature_dim", "must be >= 1");
  if (!(noise_std >= 0)) throw ConfigError("noise_std", "must be >= 0");
}

void Utterance::validate() const {
  const std::size_t n = target_tokens.size();
  if (n == 0) throw ConfigError("tokens", "utterance " + id + " has no tokens");
  if (boundaries_s.size() != n || ambiguous_mask.size() != n)
    throw ConfigError("boundaries_s", "utterance " + id + " has mismatched field lengths");
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && !(boundaries_s[i] > boundaries_s[i - 1]))
      throw ConfigError("boundaries_s", "utterance " + id + " boundaries not strictly increasing");
  }
  if (!(boundaries_s.back() <= duration_s))
    throw ConfigError("duration_s", "utterance " + id + " ends before its last boundary");
}

Dataset generate_dataset(const SynthConfig& config, int count) {
  config.validate();
  if (count < 1) throw ConfigError("count", "must be >= 1");

  std::mt19937_64 rng(config.rng_seed);
  std::uniform_int_distribution<int> length_dist(config.tokens_per_utt_range.min,
                                                 config.tokens_per_utt_range.max);
  std::uniform_int_distribution<int> token_dist(0, config.vocab_size - 1);
  std::uniform_real_distribution<double> jitter_dist(-1.0, 1.0);
  std::bernoulli_distribution ambiguous_dist(config.ambiguity_prob);
  std::bernoulli_distribution aligned_dist(config.aligned_prob);

  Dataset out;
  out.reserve(static_cast<std::size_t>(count));
  char id[32];
  for (int u = 0; u < count; ++u) {
    Utterance utt;
    std::snprintf(id, sizeof id, "utt-%06d", u);
    utt.id = id;
    const int n = length_dist(rng);
    double t = 0.0;
    for (int i = 0; i < n; ++i) {
      utt.target_tokens.push_back(token_dist(rng));
      double gap = config.mean_token_gap_s;
      if (config.gap_jitter_s > 0) gap += config.gap_jitter_s * jitter_dist(rng);
      t += std::max(gap, config.frame_s());
      utt.boundaries_s.push_back(t);
      utt.ambiguous_mask.push_back(ambiguous_dist(rng));
    }
    utt.aligned = aligned_dist(rng);
    utt.duration_s = snap_up(t + 0.5 * config.mean_token_gap_s, config.frame_ms);
    out.push_back(std::move(utt));
  }
  return out;
}

std::vector<double> frame_grid(const Utterance& utt, double frame_ms) {
  std::vector<double> grid;
  for (long k = 0;; ++k) {
    const double t = static_cast<double>(k) * frame_ms / 1000.0;
    if (t >= utt.duration_s - 1e-12) break;
    grid.push_back(t);
  }
  grid.push_back(utt.duration_s);
  return grid;
}

Oracle::Oracle(SynthConfig config) : config_(std::move(config)) {
  config_.validate();
  const int k = config_.embed_dim;
  std::mt19937_64 emb_rng(splitmix64(config_.rng_seed ^ kEmbeddingStream));
  std::normal_distribution<double> emb_dist(0.0, 1.0 / std::sqrt(static_cast<double>(k)));
  token_embeddings_.resize(config_.vocab_size, k);
  for (int v = 0; v < config_.vocab_size; ++v)
    for (int j = 0; j < k; ++j) token_embeddings_(v, j) = emb_dist(emb_rng);

  std::mt19937_64 proj_rng(splitmix64(config_.rng_seed ^ kProjectionStream));
  std::normal_distribution<double> proj_dist(0.0, 1.0);
  projection_.resize(config_.feature_dim, k + 2);
  for (int r = 0; r < config_.feature_dim; ++r)
    for (int c = 0; c < k + 2; ++c) projection_(r, c) = proj_dist(proj_rng);
}

void Oracle::check_index(const Utterance& utt, std::size_t n) const {
  if (n >= utt.size())
    throw IndexError("token index " + std::to_string(n) + " out of range for utterance " +
                     utt.id + " with " + std::to_string(utt.size()) + " tokens");
}

double Oracle::correct_token_prob(const Utterance& utt, double t_s, std::size_t n) const {
  check_index(utt, n);
  const double x = (t_s - utt.boundaries_s[n]) / config_.ramp_s;
  return config_.p_min + (config_.p_max - config_.p_min) * sigmoid(x);
}

std::vector<double> Oracle::logprob(const Utterance& utt, double t_s, std::size_t n) const {
  const double p = correct_token_prob(utt, t_s, n);
  const double rest = std::log((1.0 - p) / static_cast<double>(config_.vocab_size - 1));
  std::vector<double> out(static_cast<std::size_t>(config_.vocab_size), rest);
  out[static_cast<std::size_t>(utt.target_tokens[n])] = std::log(p);
  return out;
}

int Oracle::greedy_token(const Utterance& utt, double t_s, std::size_t n) const {
  const auto lp = logprob(utt, t_s, n);
  // First maximum wins, so ties among the uniform residual pick the lowest id.
  return static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
}

double Oracle::info_gain(const Utterance& utt, double t_s, std::size_t n) const {
  return std::log(correct_token_prob(utt, utt.duration_s, n)) -
         std::log(correct_token_prob(utt, t_s, n));
}

double Oracle::evidence_noise(const Utterance& utt, double t_s, std::size_t n) const {
  if (config_.noise_std == 0.0) return 0.0;
  const auto micros = static_cast<std::int64_t>(std::llround(t_s * 1e6));
  std::uint64_t key = splitmix64(config_.rng_seed ^ kNoiseStream);
  key = splitmix64(key ^ fnv1a(utt.id));
  key = splitmix64(key ^ static_cast<std::uint64_t>(micros));
  key = splitmix64(key ^ static_cast<std::uint64_t>(n));
  std::mt19937_64 rng(key);
  std::normal_distribution<double> dist(0.0, config_.noise_std);
  return dist(rng);
}

Eigen::VectorXd Oracle::raw_features(const Utterance& utt, double t_s, std::size_t n) const {
  check_index(utt, n);
  const int k = config_.embed_dim;
  Eigen::VectorXd raw(k + 2);
  raw.head(k) = token_embeddings_.row(utt.target_tokens[n]).transpose();
  double evidence = 0.0;
  if (!utt.ambiguous_mask[n]) {
    evidence = sigmoid((t_s - utt.boundaries_s[n]) / config_.ramp_s) + evidence_noise(utt, t_s, n);
  }
  raw(k) = evidence;
  raw(k + 1) = static_cast<double>(n) / static_cast<double>(utt.size());
  return raw;
}

Eigen::VectorXd Oracle::features(const Utterance& utt, double t_s, std::size_t n) const {
  return projection_ * raw_features(utt, t_s, n);
}

double Oracle::write_boundary(const Utterance& utt, std::size_t n, double gain_threshold) const {
  check_index(utt, n);
  const auto grid = frame_grid(utt, config_.frame_ms);
  // Gain is nonincreasing along the grid, so bisect for the first point at or
  // below the threshold. The last grid point (t = T) always qualifies.
  std::size_t lo = 0;
  std::size_t hi = grid.size() - 1;
  if (info_gain(utt, grid[hi], n) > gain_threshold) return grid[hi];
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (info_gain(utt, grid[mid], n) <= gain_threshold) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return grid[lo];
}

std::string utterance_to_json_line(const Utterance& utt) {
  std::string line = "{\"id\":" + detail::json_string(utt.id);
  line += ",\"duration_s\":" + detail::format_double(utt.duration_s);
  line += ",\"tokens\":" + detail::json_int_array(utt.target_tokens);
  line += ",\"boundaries_s\":" + detail::json_number_array(utt.boundaries_s);
  line += ",\"ambiguous\":" + detail::json_bool_array(utt.ambiguous_mask);
  line += std::string(",\"aligned\":") + (utt.aligned ? "true" : "false") + "}";
  return line;
}

Utterance utterance_from_json_line(const std::string& line) {
  Utterance utt;
  try {
    const auto j = nlohmann::json::parse(line);
    utt.id = j.at("id").get<std::string>();
    utt.duration_s = j.at("duration_s").get<double>();
    utt.target_tokens = j.at("tokens").get<std::vector<int>>();
    utt.boundaries_s = j.at("boundaries_s").get<std::vector<double>>();
    utt.ambiguous_mask = j.at("ambiguous").get<std::vector<bool>>();
    utt.aligned = j.at("aligned").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("dataset", std::string("malformed utterance record: ") + e.what());
  }
  utt.validate();
  return utt;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::string out;
  for (const auto& utt : dataset) out += utterance_to_json_line(utt) + "\n";
  detail::write_text_file(path, out);
}

Dataset load_dataset(const std::filesystem::path& path) {
  Dataset out;
  for (const auto& line : detail::read_lines(path)) out.push_back(utterance_from_json_line(line));
  return out;
}

}  // namespace reina
