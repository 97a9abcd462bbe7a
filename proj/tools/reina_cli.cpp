#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "reina/errors.hpp"
#include "reina/experiment.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kIo = 3, kNumeric = 4 };

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> dataset, checkpoint;
  std::optional<int> count;
  std::optional<std::string> variant, primary;
  std::optional<int> steps, batch_size, auto_alphas, bins;
  std::optional<double> lr, alpha, chunk_ms, ambiguity_prob;
  std::vector<double> alphas, band;
  std::vector<std::string> runs;
};

reina::ExperimentConfig resolve(const Overrides& o) {
  reina::ExperimentConfig cfg;
  if (!o.config.empty()) cfg = reina::load_experiment_config(o.config);
  if (o.seed) cfg.synth.rng_seed = cfg.train.rng_seed = *o.seed;
  if (o.out) cfg.paths.out_dir = *o.out;
  if (o.dataset) cfg.paths.dataset = *o.dataset;
  if (o.checkpoint) cfg.paths.checkpoint = *o.checkpoint;
  if (o.count) cfg.count = *o.count;
  if (o.variant) cfg.variant = cfg.train.variant = reina::parse_variant(*o.variant);
  if (o.primary) cfg.loss.primary = reina::parse_primary_loss(*o.primary);
  if (o.steps) cfg.train.steps = *o.steps;
  if (o.batch_size) cfg.train.batch_size = *o.batch_size;
  if (o.lr) cfg.train.lr = *o.lr;
  if (o.alpha) cfg.stream.alpha = *o.alpha;
  if (o.chunk_ms) cfg.stream.chunk_ms = *o.chunk_ms;
  if (o.ambiguity_prob) cfg.synth.ambiguity_prob = *o.ambiguity_prob;
  if (!o.alphas.empty()) cfg.alphas = o.alphas;
  if (o.auto_alphas) cfg.auto_alphas = *o.auto_alphas;
  if (o.bins) cfg.bins = *o.bins;
  if (!o.band.empty()) cfg.band = {o.band.at(0), o.band.at(1)};
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"REINA read/write policy lab on a synthetic oracle"};
  app.require_subcommand(1);
  Overrides o;
  app.add_option("--config", o.config, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "seed for data generation and training");
  app.add_option("--out", o.out, "output directory");
  app.add_option("--dataset", o.dataset, "dataset path (default <out>/dataset.jsonl)");
  app.add_option("--checkpoint", o.checkpoint, "checkpoint path (default <out>/policy.ckpt)");
  app.add_option("--ambiguity_prob", o.ambiguity_prob);

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("--count", o.count);

  auto* train = app.add_subcommand("train", "train a policy");
  train->add_option("--variant", o.variant, "REINA, REINA-TAN, REINA-SAN or REINA-ALL");
  train->add_option("--primary", o.primary, "cov or mse");
  train->add_option("--steps", o.steps);
  train->add_option("--batch_size", o.batch_size);
  train->add_option("--lr", o.lr);

  auto* simulate = app.add_subcommand("simulate", "stream the dataset at one threshold");
  simulate->add_option("--alpha", o.alpha);
  simulate->add_option("--chunk_ms", o.chunk_ms);

  auto* sweep = app.add_subcommand("sweep", "sweep thresholds into pareto.csv");
  sweep->add_option("--alphas", o.alphas, "explicit thresholds");
  sweep->add_option("--auto_alphas", o.auto_alphas, "number of quantile thresholds");
  sweep->add_option("--chunk_ms", o.chunk_ms);

  auto* report = app.add_subcommand("report", "NoSE, latency bins and information-gain grid");
  report->add_option("--runs", o.runs, "sweep output directories")->required();
  report->add_option("--band", o.band, "latency band lo hi (seconds)")->expected(2);
  report->add_option("--bins", o.bins);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    const auto cfg = resolve(o);
    if (gen->parsed()) {
      reina::cmd_gen(cfg, std::cout);
    } else if (train->parsed()) {
      reina::cmd_train(cfg, std::cout);
    } else if (simulate->parsed()) {
      reina::cmd_simulate(cfg, std::cout);
    } else if (sweep->parsed()) {
      reina::cmd_sweep(cfg, std::cout);
    } else if (report->parsed()) {
      std::vector<std::filesystem::path> dirs(o.runs.begin(), o.runs.end());
      reina::cmd_report(cfg, dirs, std::cout);
    }
  } catch (const reina::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const reina::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumeric;
  } catch (const reina::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  }
  return kOk;
}
