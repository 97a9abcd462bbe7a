#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "reina/errors.hpp"
#include "reina/experiment.hpp"

using namespace reina;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Workdir : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() /
          ("reina_cli_" + std::to_string(::getpid()) + "_" + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  ExperimentConfig config(const std::string& sub = "") const {
    ExperimentConfig c;
    c.count = 12;
    c.synth.ambiguity_prob = 0.3;
    c.synth.rng_seed = c.train.rng_seed = 9;
    c.train.steps = 20;
    c.train.batch_size = 32;
    c.hidden_dims = {8};
    c.auto_alphas = 5;
    c.paths.dataset = dir / "dataset.jsonl";
    c.paths.out_dir = sub.empty() ? dir : dir / sub;
    return c;
  }

  int cli(const std::string& args) const {
    const std::string cmd = std::string(REINA_CLI) + " " + args + " > " +
                            (dir / "stdout.txt").string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  }

  fs::path dir;
  std::ostringstream log;
};

}  // namespace

TEST(Config, JsonDefaultsAndOverrides) {
  const auto c = experiment_config_from_json(
      R"({"count": 7, "variant": "REINA-SAN", "synth": {"vocab_size": 20, "tokens_per_utt_range": [2, 3]},
          "train": {"adam_betas": [0.8, 0.99]}, "loss": {"primary": "mse"}, "band": {"x": 1, "y": 2}})");
  EXPECT_EQ(c.count, 7);
  EXPECT_EQ(c.variant, PolicyVariant::kReinaSan);
  EXPECT_EQ(c.train.variant, PolicyVariant::kReinaSan);
  EXPECT_EQ(c.synth.vocab_size, 20);
  EXPECT_EQ(c.synth.tokens_per_utt_range.max, 3);
  EXPECT_EQ(c.synth.p_max, SynthConfig{}.p_max);
  EXPECT_EQ(c.train.beta1, 0.8);
  EXPECT_EQ(c.loss.primary, PrimaryLoss::kMse);
  EXPECT_EQ(c.band.y, 2.0);
}

TEST(Config, RoundTripThroughJson) {
  auto c = experiment_config_from_json(R"({"alphas": [0.5, -1], "stream": {"chunk_ms": 320}})");
  const auto back = experiment_config_from_json(experiment_config_to_json(c));
  EXPECT_EQ(experiment_config_to_json(back), experiment_config_to_json(c));
  EXPECT_EQ(back.alphas, c.alphas);
  EXPECT_EQ(back.stream.chunk_ms, 320.0);
}

TEST(Config, UnknownAndInvalidFieldsRejected) {
  EXPECT_THROW(experiment_config_from_json(R"({"synth": {"vocab": 3}})"), ConfigError);
  EXPECT_THROW(experiment_config_from_json(R"({"count": "many"})"), ConfigError);
  EXPECT_THROW(experiment_config_from_json("{not json"), ConfigError);
  EXPECT_THROW(experiment_config_from_json(R"({"count": 0})").validate(), ConfigError);
}

TEST_F(Workdir, GenRoundTripAndRepeatable) {
  auto c = config();
  const auto r = cmd_gen(c, log);
  EXPECT_EQ(r.count, 12);
  const auto first = slurp(r.dataset);
  const auto loaded = load_dataset(r.dataset);
  const auto fresh = generate_dataset(c.synth, c.count);
  ASSERT_EQ(loaded.size(), fresh.size());
  for (std::size_t i = 0; i < fresh.size(); ++i)
    EXPECT_EQ(utterance_to_json_line(loaded[i]), utterance_to_json_line(fresh[i]));
  cmd_gen(c, log);
  EXPECT_EQ(slurp(r.dataset), first);
  c.count = 0;
  EXPECT_THROW(cmd_gen(c, log), ConfigError);
}

TEST_F(Workdir, TrainCheckpointMatchesMemory) {
  auto c = config();
  cmd_gen(c, log);
  c.train.steps = 1;
  const auto r = cmd_train(c, log);
  const auto ck = load_params(r.checkpoint);
  EXPECT_EQ(ck.params.values(), r.report.params.values());
  const auto csv = slurp(r.csv);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
}

TEST_F(Workdir, SanWithoutAlignedDataWarnsAndProceeds) {
  auto c = config();
  c.synth.aligned_prob = 0.0;
  c.variant = PolicyVariant::kReinaSan;
  cmd_gen(c, log);
  EXPECT_NO_THROW(cmd_train(c, log));
  EXPECT_NE(log.str().find("warning"), std::string::npos);
}

TEST_F(Workdir, SweepExtremes) {
  auto c = config();
  cmd_gen(c, log);
  cmd_train(c, log);
  c.alphas = {-1e9, 1e9};
  const auto s = cmd_sweep(c, log);
  ASSERT_EQ(s.points.size(), 2u);
  EXPECT_EQ(s.points[0].read_loop_pct, 100.0);
  EXPECT_EQ(s.log_files.size(), 2u);
  const auto data = load_dataset(c.dataset_path());
  const auto logs = load_emission_logs(s.log_files[1]);
  for (const auto& l : logs)
    for (const auto& e : l.emissions) EXPECT_EQ(e.delay_s, 0.25);
  const auto before = slurp(s.pareto_csv);
  cmd_sweep(c, log);
  EXPECT_EQ(slurp(s.pareto_csv), before);
}

TEST_F(Workdir, ReportOnHandFixture) {
  auto c = config("report");
  cmd_gen(c, log);
  // A fabricated sweep directory holding the two-point curve.
  const auto run = dir / "fixture";
  fs::create_directories(run / "logs");
  const auto data = load_dataset(c.dataset_path());
  std::ofstream logs0(run / "logs" / "alpha_000.jsonl");
  std::ofstream logs1(run / "logs" / "alpha_001.jsonl");
  for (const auto& u : data) {
    EmissionLog l;
    l.utt_id = u.id;
    l.duration_s = u.duration_s;
    for (std::size_t i = 0; i < u.size(); ++i) l.emissions.push_back({u.target_tokens[i], u.duration_s, true});
    logs0 << emission_log_to_json_line(l) << "\n";
    logs1 << emission_log_to_json_line(l) << "\n";
  }
  logs0.close();
  logs1.close();
  // Offline BLEU of the oracle is 100, so the (1, 20), (3, 40) fixture is
  // scaled to it.
  std::ofstream(run / "pareto.csv") << "alpha,laal_s,bleu,read_loop_pct\n0,1,50,0\n1,3,100,0\n";
  c.band = {1.0, 3.0};
  const auto before = slurp(run / "pareto.csv");
  const auto r = cmd_report(c, {run}, log);
  EXPECT_EQ(r.offline_quality, 100.0);
  ASSERT_EQ(r.runs.size(), 1u);
  EXPECT_EQ(r.runs[0].nose, 0.75);
  EXPECT_EQ(slurp(r.runs[0].nose_csv), "band_x,band_y,nose\n1.00000000,3.00000000,0.750000000\n");
  EXPECT_EQ(slurp(run / "pareto.csv"), before);
  const auto grid = slurp(r.info_gain_csv);
  EXPECT_EQ(grid.substr(0, grid.find('\n')), "t_s,token_index,info_gain");
  // Every row at t = T reports zero gain.
  const auto T = data[0].duration_s;
  std::istringstream rows(grid);
  std::string row;
  std::getline(rows, row);
  int at_end = 0;
  while (std::getline(rows, row)) {
    const double t = std::stod(row.substr(0, row.find(',')));
    if (t == T) {
      EXPECT_EQ(std::stod(row.substr(row.rfind(',') + 1)), 0.0);
      ++at_end;
    }
  }
  EXPECT_EQ(at_end, static_cast<int>(data[0].size()));

  c.band = {0.5, 3.0};
  EXPECT_THROW(cmd_report(c, {run}, log), MetricError);
}

TEST_F(Workdir, CliPipelineAndExitCodes) {
  const auto out = dir / "run";
  const std::string g = "--out " + out.string() + " --seed 4 ";
  ASSERT_EQ(cli(g + "gen --count 10"), 0);
  ASSERT_EQ(cli(g + "train --steps 5 --batch_size 32"), 0);
  ASSERT_EQ(cli(g + "simulate --alpha 0.5"), 0);
  EXPECT_TRUE(fs::exists(out / "emissions.jsonl"));
  ASSERT_EQ(cli(g + "sweep --alphas -1e9 0 1e9"), 0);
  ASSERT_EQ(cli(g + "report --runs " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "run" / "nose.csv"));
  EXPECT_TRUE(fs::exists(out / "run" / "latency_bins.csv"));
  EXPECT_TRUE(fs::exists(out / "info_gain_grid.csv"));

  EXPECT_EQ(cli(g + "gen --count 0"), 2);
  EXPECT_EQ(cli(g + "train --variant nonsense"), 2);
  EXPECT_EQ(cli("--out " + (dir / "empty").string() + " train"), 3);
  std::ofstream(dir / "bad.json") << R"({"synth": {"p_min": 0.9, "p_max": 0.1}})";
  EXPECT_EQ(cli("--config " + (dir / "bad.json").string() + " --out " + out.string() + " gen"), 2);
  EXPECT_EQ(cli(g + "train --lr 1e300 --steps 50 --batch_size 32"), 4);
}
