#include "reina/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "reina/errors.hpp"
#include "text_format.hpp"

namespace reina {
namespace {

constexpr int kMaxOrder = 4;

using NgramCounts = std::map<std::vector<int>, int>;

NgramCounts count_ngrams(const TokenSeq& seq, std::size_t order) {
  NgramCounts counts;
  if (seq.size() < order) return counts;
  for (std::size_t i = 0; i + order <= seq.size(); ++i)
    ++counts[std::vector<int>(seq.begin() + static_cast<long>(i),
                              seq.begin() + static_cast<long>(i + order))];
  return counts;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::vector<int> EmissionLog::tokens() const {
  std::vector<int> out;
  out.reserve(emissions.size());
  for (const auto& e : emissions) out.push_back(e.token);
  return out;
}

std::vector<double> EmissionLog::delays() const {
  std::vector<double> out;
  out.reserve(emissions.size());
  for (const auto& e : emissions) out.push_back(e.delay_s);
  return out;
}

double laal(const EmissionLog& log, std::size_t ref_len) {
  const double T = log.duration_s;
  if (!(T > 0)) throw MetricError("LAAL undefined for source duration " + std::to_string(T));
  if (log.emissions.empty()) throw MetricError("LAAL undefined for an empty hypothesis");
  if (ref_len < 1) throw MetricError("LAAL needs a reference length >= 1");
  const std::size_t hyp_len = log.emissions.size();
  const double gamma = static_cast<double>(std::max(hyp_len, ref_len)) / T;
  std::size_t tau = hyp_len;
  for (std::size_t i = 0; i < hyp_len; ++i) {
    if (log.emissions[i].delay_s >= T) {
      tau = i + 1;
      break;
    }
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < tau; ++i)
    sum += log.emissions[i].delay_s - static_cast<double>(i) / gamma;
  return sum / static_cast<double>(tau);
}

double bleu(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs) {
  if (hyps.size() != refs.size())
    throw MetricError("BLEU needs one reference per hypothesis (" + std::to_string(hyps.size()) +
                      " vs " + std::to_string(refs.size()) + ")");
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
  std::array<long, kMaxOrder> matches{};
  std::array<long, kMaxOrder> totals{};
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    hyp_len += hyps[s].size();
    ref_len += refs[s].size();
    for (int n = 1; n <= kMaxOrder; ++n) {
      const auto h = count_ngrams(hyps[s], static_cast<std::size_t>(n));
      const auto r = count_ngrams(refs[s], static_cast<std::size_t>(n));
      for (const auto& [gram, count] : h) {
        totals[n - 1] += count;
        const auto it = r.find(gram);
        if (it != r.end()) matches[n - 1] += std::min(count, it->second);
      }
    }
  }
  if (hyp_len == 0 || matches[0] == 0) return 0.0;

  double log_precision = 0.0;
  for (int n = 0; n < kMaxOrder; ++n) {
    const double p = matches[n] > 0 ? static_cast<double>(matches[n]) / totals[n]
                                     : 1.0 / static_cast<double>(totals[n] + 1);
    log_precision += std::log(p) / kMaxOrder;
  }
  const double bp =
      hyp_len < ref_len ? std::exp(1.0 - static_cast<double>(ref_len) / hyp_len) : 1.0;
  return 100.0 * bp * std::exp(log_precision);
}

std::vector<CurvePoint> pareto_envelope(std::span<const ParetoPoint> points) {
  std::vector<CurvePoint> sorted;
  sorted.reserve(points.size());
  for (const auto& p : points) sorted.push_back({p.mean_laal_s, p.quality});
  std::sort(sorted.begin(), sorted.end(), [](const CurvePoint& a, const CurvePoint& b) {
    return a.latency != b.latency ? a.latency < b.latency : a.quality > b.quality;
  });
  std::vector<CurvePoint> out;
  for (const auto& p : sorted)
    if (out.empty() || p.quality > out.back().quality) out.push_back(p);
  return out;
}

double interpolate_curve(const std::vector<CurvePoint>& curve, double latency) {
  if (curve.empty()) throw MetricError("cannot interpolate an empty curve");
  if (latency <= curve.front().latency) return curve.front().quality;
  if (latency >= curve.back().latency) return curve.back().quality;
  const auto hi = std::upper_bound(
      curve.begin(), curve.end(), latency,
      [](double l, const CurvePoint& p) { return l < p.latency; });
  const auto lo = hi - 1;
  const double w = (latency - lo->latency) / (hi->latency - lo->latency);
  return lo->quality + w * (hi->quality - lo->quality);
}

double nose(std::span<const ParetoPoint> points, double offline_quality, const LatencyBand& band) {
  if (points.size() < 2) throw MetricError("NoSE needs at least 2 operating points");
  if (!(offline_quality > 0)) throw MetricError("NoSE needs a positive offline quality");
  if (!(band.x < band.y)) throw MetricError("NoSE band must satisfy x < y");
  double lo = points[0].mean_laal_s;
  double hi = lo;
  for (const auto& p : points) {
    lo = std::min(lo, p.mean_laal_s);
    hi = std::max(hi, p.mean_laal_s);
  }
  if (band.x < lo || band.y > hi) {
    std::ostringstream msg;
    msg << "NoSE band [" << band.x << ", " << band.y << "] outside achievable latency range ["
        << lo << ", " << hi << "]";
    throw MetricError(msg.str());
  }
  const auto curve = pareto_envelope(points);
  std::vector<double> knots{band.x};
  for (const auto& p : curve)
    if (p.latency > band.x && p.latency < band.y) knots.push_back(p.latency);
  knots.push_back(band.y);

  double area = 0.0;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const double a = interpolate_curve(curve, knots[i]);
    const double b = interpolate_curve(curve, knots[i + 1]);
    area += 0.5 * (a + b) * (knots[i + 1] - knots[i]);
  }
  return area / (band.y - band.x) / offline_quality;
}

bool detect_read_loop(const EmissionLog& log) {
  if (log.emissions.empty()) return true;
  return log.emissions.front().delay_s >= log.duration_s;
}

double read_loop_pct(std::span<const EmissionLog> logs) {
  if (logs.empty()) throw MetricError("read-loop percentage of an empty log set");
  const auto loops = std::count_if(logs.begin(), logs.end(), detect_read_loop);
  return 100.0 * static_cast<double>(loops) / static_cast<double>(logs.size());
}

std::vector<LatencyBin> latency_vs_position(std::span<const EmissionLog> logs,
                                            const Dataset& dataset, int bins) {
  if (bins < 1) throw MetricError("latency_vs_position needs bins >= 1");
  std::unordered_map<std::string, const Utterance*> by_id;
  for (const auto& utt : dataset) by_id[utt.id] = &utt;

  std::vector<std::vector<double>> samples(static_cast<std::size_t>(bins));
  for (const auto& log : logs) {
    const auto it = by_id.find(log.utt_id);
    if (it == by_id.end()) throw MetricError("no utterance '" + log.utt_id + "' in dataset");
    const Utterance& utt = *it->second;
    const std::size_t n = utt.size();
    const std::size_t limit = std::min(n, log.emissions.size());
    for (std::size_t i = 0; i < limit; ++i) {
      const double rel = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
      const auto b = std::min(static_cast<std::size_t>(rel * bins), static_cast<std::size_t>(bins - 1));
      samples[b].push_back(log.emissions[i].delay_s - utt.boundaries_s[i]);
    }
  }

  std::vector<LatencyBin> out(static_cast<std::size_t>(bins));
  for (int b = 0; b < bins; ++b) {
    auto& bin = out[static_cast<std::size_t>(b)];
    const auto& s = samples[static_cast<std::size_t>(b)];
    bin.center = (b + 0.5) / bins;
    bin.count = s.size();
    if (s.empty()) continue;
    const double count = static_cast<double>(s.size());
    const double mean = std::accumulate(s.begin(), s.end(), 0.0) / count;
    double ss = 0.0;
    for (double v : s) ss += (v - mean) * (v - mean);
    const double sd = s.size() > 1 ? std::sqrt(ss / (count - 1)) : 0.0;
    const double half = 1.96 * sd / std::sqrt(count);
    bin.mean_latency_s = mean;
    bin.ci_low = mean - half;
    bin.ci_high = mean + half;
  }
  return out;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2)
    throw MetricError("spearman needs two equal-length samples of size >= 2");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0 || vb == 0) return 0.0;
  return cov / std::sqrt(va * vb);
}

std::string pareto_csv(std::span<const ParetoPoint> points) {
  std::string out = "alpha,laal_s,bleu,read_loop_pct\n";
  for (const auto& p : points) {
    out += detail::format_double(p.alpha) + "," + detail::format_double(p.mean_laal_s) + "," +
           detail::format_double(p.quality) + "," + detail::format_double(p.read_loop_pct) + "\n";
  }
  return out;
}

std::vector<ParetoPoint> parse_pareto_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("alpha,laal_s,bleu,read_loop_pct", 0) != 0)
    throw MetricError("pareto CSV is missing its header");
  std::vector<ParetoPoint> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::array<double, 4> v{};
    const char* p = line.c_str();
    for (std::size_t k = 0; k < v.size(); ++k) {
      char* end = nullptr;
      v[k] = std::strtod(p, &end);
      if (end == p) throw MetricError("malformed pareto CSV row: " + line);
      p = *end == ',' ? end + 1 : end;
    }
    out.push_back({v[0], v[1], v[2], v[3]});
  }
  return out;
}

std::string latency_bins_csv(std::span<const LatencyBin> bins) {
  std::string out = "bin_center,mean_latency_s,ci_low,ci_high,count\n";
  auto opt = [](const std::optional<double>& v) {
    return v ? detail::format_double(*v) : std::string();
  };
  for (const auto& b : bins) {
    out += detail::format_double(b.center) + "," + opt(b.mean_latency_s) + "," + opt(b.ci_low) +
           "," + opt(b.ci_high) + "," + std::to_string(b.count) + "\n";
  }
  return out;
}

}  // namespace reina
