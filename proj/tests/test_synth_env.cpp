#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "reina/errors.hpp"
#include "reina/synth_env.hpp"

using namespace reina;
namespace fs = std::filesystem;

namespace {

SynthConfig small(double ambiguity = 0.0, std::uint64_t seed = 1) {
  SynthConfig c;
  c.ambiguity_prob = ambiguity;
  c.rng_seed = seed;
  return c;
}

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("reina_synth_" + std::to_string(::getpid()) + name);
}

}  // namespace

TEST(Generate, InvariantsHold) {
  const auto c = small(0.3);
  const auto data = generate_dataset(c, 100);
  ASSERT_EQ(data.size(), 100u);
  int ambiguous = 0, total = 0;
  for (const auto& u : data) {
    EXPECT_NO_THROW(u.validate());
    ASSERT_GE(u.size(), 4u);
    ASSERT_LE(u.size(), 10u);
    for (std::size_t i = 1; i < u.size(); ++i) EXPECT_GT(u.boundaries_s[i], u.boundaries_s[i - 1]);
    EXPECT_GT(u.boundaries_s.front(), 0.0);
    EXPECT_LE(u.boundaries_s.back(), u.duration_s);
    // Duration sits on the frame grid.
    EXPECT_NEAR(std::remainder(u.duration_s, c.frame_s()), 0.0, 1e-9);
    for (int t : u.target_tokens) EXPECT_TRUE(t >= 0 && t < c.vocab_size);
    for (bool a : u.ambiguous_mask) ambiguous += a, ++total;
  }
  EXPECT_NEAR(static_cast<double>(ambiguous) / total, 0.3, 0.05);
}

TEST(Generate, DeterministicPerSeed) {
  const auto a = generate_dataset(small(0.2, 5), 20);
  const auto b = generate_dataset(small(0.2, 5), 20);
  const auto c = generate_dataset(small(0.2, 6), 20);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(utterance_to_json_line(a[i]), utterance_to_json_line(b[i]));
  }
  EXPECT_NE(utterance_to_json_line(a[0]), utterance_to_json_line(c[0]));
}

TEST(Generate, RejectsBadConfig) {
  EXPECT_THROW(generate_dataset(small(), 0), ConfigError);
  auto c = small();
  c.p_min = 0.9;
  c.p_max = 0.5;
  EXPECT_THROW(generate_dataset(c, 3), ConfigError);
  c = small();
  c.ambiguity_prob = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small();
  c.tokens_per_utt_range = {5, 2};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Dataset, JsonRoundTrip) {
  const auto data = generate_dataset(small(0.4, 3), 15);
  const auto path = temp_file("data.jsonl");
  save_dataset(data, path);
  const auto back = load_dataset(path);
  ASSERT_EQ(back.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(back[i].id, data[i].id);
    EXPECT_EQ(back[i].duration_s, data[i].duration_s);
    EXPECT_EQ(back[i].target_tokens, data[i].target_tokens);
    EXPECT_EQ(back[i].boundaries_s, data[i].boundaries_s);
    EXPECT_EQ(back[i].ambiguous_mask, data[i].ambiguous_mask);
    EXPECT_EQ(back[i].aligned, data[i].aligned);
  }
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  for (const char* key : {"\"id\"", "\"duration_s\"", "\"tokens\"", "\"boundaries_s\"",
                          "\"ambiguous\"", "\"aligned\""})
    EXPECT_NE(line.find(key), std::string::npos) << key;
  fs::remove(path);
}

TEST(Dataset, MissingFileIsIoError) {
  EXPECT_THROW(load_dataset("/nonexistent/dir/data.jsonl"), IoError);
}

TEST(FrameGrid, EndsAtDuration) {
  Utterance u;
  u.duration_s = 0.23;
  const auto g = frame_grid(u, 50.0);
  ASSERT_EQ(g.size(), 6u);
  EXPECT_EQ(g.front(), 0.0);
  EXPECT_EQ(g.back(), 0.23);
}

class OracleTest : public ::testing::Test {
 protected:
  SynthConfig cfg = small(0.3, 4);
  Oracle oracle{cfg};
  Dataset data = generate_dataset(cfg, 30);
};

TEST_F(OracleTest, CorrectProbabilityFollowsRamp) {
  const auto& u = data[0];
  for (std::size_t n = 0; n < u.size(); ++n) {
    const double ts = u.boundaries_s[n];
    EXPECT_NEAR(oracle.correct_token_prob(u, ts, n), 0.5 * (cfg.p_min + cfg.p_max), 1e-15);
    const double t = ts - 0.3;
    const double expect =
        cfg.p_min + (cfg.p_max - cfg.p_min) / (1.0 + std::exp(-(t - ts) / cfg.ramp_s));
    EXPECT_NEAR(oracle.correct_token_prob(u, t, n), expect, 1e-15);
  }
}

TEST_F(OracleTest, LogprobIsNormalisedDistribution) {
  const auto& u = data[1];
  for (double t : {0.0, 1.0, u.duration_s}) {
    const auto lp = oracle.logprob(u, t, 0);
    ASSERT_EQ(lp.size(), static_cast<std::size_t>(cfg.vocab_size));
    double s = 0;
    for (double v : lp) s += std::exp(v);
    EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_NEAR(lp[u.target_tokens[0]], std::log(oracle.correct_token_prob(u, t, 0)), 1e-12);
  }
}

TEST_F(OracleTest, GreedyIsWrongEarlyRightLate) {
  const auto& u = data[2];
  EXPECT_EQ(oracle.greedy_token(u, u.duration_s, 0), u.target_tokens[0]);
  // Below 1/V the correct token loses to the spread residual mass.
  EXPECT_NE(oracle.greedy_token(u, 0.0, u.size() - 1), u.target_tokens[u.size() - 1]);
}

TEST_F(OracleTest, InfoGainZeroAtEndAndNonincreasing) {
  for (const auto& u : data) {
    for (std::size_t n = 0; n < u.size(); ++n) {
      EXPECT_EQ(oracle.info_gain(u, u.duration_s, n), 0.0);
      double prev = INFINITY;
      for (double t : frame_grid(u, cfg.frame_ms)) {
        const double f = oracle.info_gain(u, t, n);
        EXPECT_GE(f, 0.0);
        EXPECT_LE(f, prev + 1e-15);
        prev = f;
      }
    }
  }
}

TEST_F(OracleTest, WriteBoundaryMatchesLinearScan) {
  for (double g : {0.0, 0.05, 0.5, 1.0, 3.0, 10.0}) {
    for (const auto& u : data) {
      for (std::size_t n = 0; n < u.size(); ++n) {
        double expect = u.duration_s;
        for (double t : frame_grid(u, cfg.frame_ms))
          if (oracle.info_gain(u, t, n) <= g) {
            expect = t;
            break;
          }
        EXPECT_EQ(oracle.write_boundary(u, n, g), expect);
      }
    }
  }
}

TEST_F(OracleTest, FeaturesHideTimeForAmbiguousTokens) {
  for (const auto& u : data) {
    for (std::size_t n = 0; n < u.size(); ++n) {
      const auto raw = oracle.raw_features(u, u.boundaries_s[n], n);
      const double evidence = raw(cfg.embed_dim);
      if (u.ambiguous_mask[n]) {
        EXPECT_EQ(evidence, 0.0);
        EXPECT_EQ(oracle.features(u, 0.1, n), oracle.features(u, u.duration_s, n));
      } else {
        EXPECT_EQ(evidence, 0.5);
      }
      EXPECT_EQ(raw(cfg.embed_dim + 1), static_cast<double>(n) / u.size());
      EXPECT_EQ(oracle.features(u, 1.0, n).size(), cfg.feature_dim);
    }
  }
}

TEST_F(OracleTest, OutOfRangeTokenThrows) {
  EXPECT_THROW(oracle.info_gain(data[0], 0.5, data[0].size()), IndexError);
}

TEST(Oracle, NoiseIsDeterministic) {
  auto c = small(0.0, 8);
  c.noise_std = 0.1;
  const Oracle a(c), b(c);
  const auto data = generate_dataset(c, 2);
  EXPECT_EQ(a.features(data[0], 0.75, 1), b.features(data[0], 0.75, 1));
  auto quiet = c;
  quiet.noise_std = 0.0;
  EXPECT_NE(a.raw_features(data[0], 0.75, 1)(c.embed_dim),
            Oracle(quiet).raw_features(data[0], 0.75, 1)(c.embed_dim));
}
