#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "reina/errors.hpp"
#include "reina/metrics.hpp"

using namespace reina;

namespace {

EmissionLog make_log(std::vector<double> delays, double T, std::vector<int> tokens = {}) {
  EmissionLog log;
  log.utt_id = "u";
  log.duration_s = T;
  for (std::size_t i = 0; i < delays.size(); ++i)
    log.emissions.push_back(
        {tokens.empty() ? static_cast<int>(i) : tokens[i], delays[i], delays[i] >= T});
  return log;
}

// Straight transcription of the lagging formula, no shared code.
double laal_ref(const std::vector<double>& d, std::size_t ref_len, double T) {
  const double gamma = static_cast<double>(std::max(d.size(), ref_len)) / T;
  std::size_t tau = d.size();
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] >= T) {
      tau = i + 1;
      break;
    }
  double s = 0;
  for (std::size_t i = 1; i <= tau; ++i) s += d[i - 1] - (i - 1) / gamma;
  return s / tau;
}

// Reference corpus BLEU-4 using std::map n-gram counts.
double bleu_ref(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs) {
  double match[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
  double hl = 0, rl = 0;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    hl += hyps[s].size();
    rl += refs[s].size();
    for (int n = 1; n <= 4; ++n) {
      std::map<TokenSeq, int> h, r;
      for (std::size_t i = 0; i + n <= hyps[s].size(); ++i)
        ++h[TokenSeq(hyps[s].begin() + i, hyps[s].begin() + i + n)];
      for (std::size_t i = 0; i + n <= refs[s].size(); ++i)
        ++r[TokenSeq(refs[s].begin() + i, refs[s].begin() + i + n)];
      for (auto& [g, c] : h) {
        total[n - 1] += c;
        match[n - 1] += std::min(c, r.count(g) ? r[g] : 0);
      }
    }
  }
  if (match[0] == 0) return 0;
  double logp = 0;
  for (int n = 0; n < 4; ++n) {
    double m = match[n], t = total[n];
    if (n > 0 && m == 0) m += 1, t += 1;
    if (t == 0) t = 1, m = 1;
    logp += std::log(m / t) / 4;
  }
  const double bp = hl >= rl ? 1.0 : std::exp(1 - rl / hl);
  return 100 * bp * std::exp(logp);
}

}  // namespace

TEST(Laal, HandFixture) {
  EXPECT_DOUBLE_EQ(laal(make_log({1.0, 2.0}, 2.0), 2), 1.0);
}

TEST(Laal, AlwaysReadEqualsDuration) {
  EXPECT_DOUBLE_EQ(laal(make_log({3.5, 3.5, 3.5}, 3.5), 3), 3.5);
}

TEST(Laal, InstantEmissionIsNotClamped) {
  const double v = laal(make_log({0.25, 0.25, 0.25, 0.25}, 4.0), 4);
  EXPECT_DOUBLE_EQ(v, 0.25 - 1.5);
}

TEST(Laal, MatchesReferenceOnRandomLogs) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const double T = 1 + 5 * u(rng);
    const std::size_t n = 1 + rng() % 8, ref = 1 + rng() % 8;
    std::vector<double> d;
    double t = 0;
    for (std::size_t i = 0; i < n; ++i) d.push_back(t = std::min(T, t + u(rng)));
    EXPECT_NEAR(laal(make_log(d, T), ref), laal_ref(d, ref, T), 1e-12);
  }
}

TEST(Laal, ScalesWithTime) {
  const std::vector<double> d{0.5, 1.25, 2.0, 3.0};
  std::vector<double> d2;
  for (double x : d) d2.push_back(2.5 * x);
  EXPECT_NEAR(laal(make_log(d2, 7.5), 5), 2.5 * laal(make_log(d, 3.0), 5), 1e-12);
}

TEST(Bleu, HandFixture) {
  EXPECT_NEAR(bleu({{1, 2, 3, 4}}, {{1, 2, 3, 4, 5}}), 100 * std::exp(1 - 1.25), 1e-9);
  EXPECT_NEAR(bleu({{1, 2, 3, 4}}, {{1, 2, 3, 4, 5}}), 77.88, 0.01);
}

TEST(Bleu, IdenticalIsHundredAndDisjointIsZero) {
  EXPECT_DOUBLE_EQ(bleu({{1, 2, 3, 4, 5}}, {{1, 2, 3, 4, 5}}), 100.0);
  EXPECT_DOUBLE_EQ(bleu({{7, 8, 9}}, {{1, 2, 3}}), 0.0);
}

TEST(Bleu, MatchesReferenceOnRandomCorpora) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<TokenSeq> hyps, refs;
    for (int s = 0; s < 5; ++s) {
      TokenSeq r, h;
      const int len = 3 + rng() % 8;
      for (int i = 0; i < len; ++i) r.push_back(rng() % 6);
      h = r;
      for (auto& x : h)
        if (rng() % 4 == 0) x = rng() % 6;
      if (rng() % 3 == 0) h.pop_back();
      hyps.push_back(h);
      refs.push_back(r);
    }
    EXPECT_NEAR(bleu(hyps, refs), bleu_ref(hyps, refs), 1e-9);
  }
}

TEST(Bleu, MismatchedCorpusSizesThrow) {
  EXPECT_THROW(bleu({{1}}, {{1}, {2}}), Error);
}

TEST(Nose, TwoPointFixture) {
  const std::vector<ParetoPoint> pts{{0, 1.0, 20.0, 0}, {1, 3.0, 40.0, 0}};
  EXPECT_EQ(nose(pts, 40.0, {1.0, 3.0}), 0.75);
}

TEST(Nose, FlatAtOfflineIsOne) {
  const std::vector<ParetoPoint> pts{{0, 1.0, 30.0, 0}, {1, 2.0, 30.0, 0}, {2, 4.0, 30.0, 0}};
  EXPECT_DOUBLE_EQ(nose(pts, 30.0, {1.5, 3.5}), 1.0);
}

TEST(Nose, BandOutsideSweepThrowsWithRange) {
  const std::vector<ParetoPoint> pts{{0, 1.0, 20.0, 0}, {1, 3.0, 40.0, 0}};
  try {
    nose(pts, 40.0, {0.5, 2.0});
    FAIL();
  } catch (const MetricError& e) {
    EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
  }
}

TEST(Nose, DominatedPointsAreIgnored) {
  std::vector<ParetoPoint> pts{{0, 1.0, 20.0, 0}, {1, 3.0, 40.0, 0}};
  const double base = nose(pts, 40.0, {1.0, 3.0});
  pts.push_back({2, 2.0, 5.0, 0});  // worse and slower than the first point
  EXPECT_DOUBLE_EQ(nose(pts, 40.0, {1.0, 3.0}), base);
}

TEST(Envelope, IsMonotoneAndDominates) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 10);
  std::vector<ParetoPoint> pts;
  for (int i = 0; i < 40; ++i) pts.push_back({double(i), u(rng), u(rng), 0});
  const auto env = pareto_envelope(pts);
  ASSERT_FALSE(env.empty());
  for (std::size_t i = 1; i < env.size(); ++i) {
    EXPECT_GT(env[i].latency, env[i - 1].latency);
    EXPECT_GT(env[i].quality, env[i - 1].quality);
  }
  // Every raw point sits on or below the envelope at its own latency.
  for (const auto& p : pts)
    EXPECT_GE(interpolate_curve(env, p.mean_laal_s) + 1e-12, p.quality);
}

TEST(ReadLoop, Detection) {
  EXPECT_TRUE(detect_read_loop(make_log({4.0, 4.0}, 4.0)));
  EXPECT_FALSE(detect_read_loop(make_log({3.9, 4.0}, 4.0)));
  const std::vector<EmissionLog> logs{make_log({4.0}, 4.0), make_log({1.0}, 4.0),
                                      make_log({1.0}, 4.0), make_log({1.0}, 4.0)};
  EXPECT_DOUBLE_EQ(read_loop_pct(logs), 25.0);
}

TEST(LatencyBins, AlwaysReadDecreasesAlongPosition) {
  Dataset data;
  std::vector<EmissionLog> logs;
  for (int u = 0; u < 5; ++u) {
    Utterance utt;
    utt.id = "u" + std::to_string(u);
    utt.duration_s = 5.0;
    for (int i = 0; i < 5; ++i) {
      utt.target_tokens.push_back(i);
      utt.boundaries_s.push_back(0.5 + i);
      utt.ambiguous_mask.push_back(false);
    }
    data.push_back(utt);
    auto log = make_log({5, 5, 5, 5, 5}, 5.0);
    log.utt_id = utt.id;
    logs.push_back(log);
  }
  const auto bins = latency_vs_position(logs, data, 5);
  ASSERT_EQ(bins.size(), 5u);
  for (std::size_t i = 1; i < bins.size(); ++i) {
    ASSERT_TRUE(bins[i].mean_latency_s && bins[i - 1].mean_latency_s);
    EXPECT_LT(*bins[i].mean_latency_s, *bins[i - 1].mean_latency_s);
  }
  EXPECT_DOUBLE_EQ(*bins[0].mean_latency_s, 4.5);
  EXPECT_EQ(bins[0].count, 5u);
}

TEST(Spearman, KnownValues) {
  const std::vector<double> a{1, 2, 3, 4, 5};
  const std::vector<double> up{2, 4, 9, 16, 100}, down{5, 4, 3, 2, 1};
  EXPECT_NEAR(spearman(a, up), 1.0, 1e-12);
  EXPECT_NEAR(spearman(a, down), -1.0, 1e-12);
  // Average ranks for ties: x ranks [1.5, 1.5, 3], y ranks [1, 2, 3].
  const std::vector<double> x{1, 1, 2}, y{1, 2, 3};
  EXPECT_NEAR(spearman(x, y), 0.8660254037844386, 1e-12);
}

TEST(Csv, ParetoRoundTripIsExact) {
  const std::vector<ParetoPoint> pts{{-0.1, 1.0 / 3.0, 77.8800783, 12.5},
                                     {2.5e-7, 4.25, 99.999999999, 0.0}};
  const auto text = pareto_csv(pts);
  EXPECT_EQ(text.substr(0, text.find('\n')), "alpha,laal_s,bleu,read_loop_pct");
  const auto back = parse_pareto_csv(text);
  ASSERT_EQ(back.size(), pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_EQ(back[i].alpha, pts[i].alpha);
    EXPECT_EQ(back[i].mean_laal_s, pts[i].mean_laal_s);
    EXPECT_EQ(back[i].quality, pts[i].quality);
    EXPECT_EQ(back[i].read_loop_pct, pts[i].read_loop_pct);
  }
}

TEST(Csv, LatencyBinsHeader) {
  const std::vector<LatencyBin> bins{{0.25, 0, {}, {}, {}}, {0.75, 2, 1.0, 0.5, 1.5}};
  const auto text = latency_bins_csv(bins);
  EXPECT_EQ(text.substr(0, text.find('\n')), "bin_center,mean_latency_s,ci_low,ci_high,count");
}
