#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reina/synth_env.hpp"

namespace reina {

struct Emission {
  int token = 0;
  double delay_s = 0.0;  // source seconds consumed when the token was written
  bool forced = false;   // written with the policy bypassed (source exhausted)
};

struct EmissionLog {
  std::string utt_id;
  std::vector<Emission> emissions;
  double duration_s = 0.0;
  bool forced_tail = false;
  bool truncated = false;

  std::vector<int> tokens() const;
  std::vector<double> delays() const;
};

struct ParetoPoint {
  double alpha = 0.0;
  double mean_laal_s = 0.0;
  double quality = 0.0;  // corpus BLEU
  double read_loop_pct = 0.0;
};

struct LatencyBand {
  double x = 0.0;
  double y = 0.0;
};

// Length-adaptive average lagging in seconds.
double laal(const EmissionLog& log, std::size_t ref_len);

using TokenSeq = std::vector<int>;

// Corpus BLEU-4 in [0, 100]; zero higher-order match counts are add-one smoothed.
double bleu(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs);

struct CurvePoint {
  double latency = 0.0;
  double quality = 0.0;
};

// Non-dominated points sorted by latency (quality strictly increasing).
std::vector<CurvePoint> pareto_envelope(std::span<const ParetoPoint> points);
// Piecewise-linear interpolation through `curve`, held flat past its ends.
double interpolate_curve(const std::vector<CurvePoint>& curve, double latency);

// Band-averaged envelope quality divided by the offline quality.
double nose(std::span<const ParetoPoint> points, double offline_quality, const LatencyBand& band);

bool detect_read_loop(const EmissionLog& log);
double read_loop_pct(std::span<const EmissionLog> logs);

struct LatencyBin {
  double center = 0.0;
  std::size_t count = 0;
  // Absent when no token fell into the bin.
  std::optional<double> mean_latency_s;
  std::optional<double> ci_low;
  std::optional<double> ci_high;
};

// Emission lateness d_i - t*_i against relative token position.
std::vector<LatencyBin> latency_vs_position(std::span<const EmissionLog> logs,
                                            const Dataset& dataset, int bins);

// Average-rank Spearman correlation.
double spearman(std::span<const double> a, std::span<const double> b);

std::string pareto_csv(std::span<const ParetoPoint> points);
std::vector<ParetoPoint> parse_pareto_csv(const std::string& text);
std::string latency_bins_csv(std::span<const LatencyBin> bins);

}  // namespace reina
