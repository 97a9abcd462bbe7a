#include <benchmark/benchmark.h>

#include <random>

#include "reina/metrics.hpp"
#include "reina/streaming.hpp"
#include "reina/trainer.hpp"

using namespace reina;

namespace {

PolicyBatch random_batch(int dim, int cols) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  PolicyBatch b;
  b.features.resize(dim, cols);
  b.t_audio.resize(cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < dim; ++i) b.features(i, j) = n(rng);
    b.t_audio(j) = 0.05 * j;
  }
  return b;
}

void BM_ForwardBatch(benchmark::State& state) {
  const auto v = PolicyVariant::kReinaTan;
  const auto p = PolicyParams::init(policy_config_for(v, 16), 1);
  const auto b = random_batch(16, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(forward_batch(p, b, v));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBatch)->Arg(1)->Arg(64)->Arg(512);

void BM_Backward(benchmark::State& state) {
  const auto v = PolicyVariant::kReinaTan;
  const auto p = PolicyParams::init(policy_config_for(v, 16), 1);
  const auto b = random_batch(16, static_cast<int>(state.range(0)));
  const Eigen::VectorXd up = Eigen::VectorXd::Ones(b.size());
  for (auto _ : state) benchmark::DoNotOptimize(backward(p, b, v, up));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Backward)->Arg(64)->Arg(512);

void BM_TrainStep(benchmark::State& state) {
  SynthConfig c;
  c.ambiguity_prob = 0.3;
  const Oracle oracle(c);
  const auto data = generate_dataset(c, 50);
  TrainConfig tc;
  tc.variant = PolicyVariant::kReinaAll;
  const auto p = PolicyParams::init(policy_config_for(tc.variant, 16), 2);
  std::mt19937_64 rng(3);
  for (auto _ : state) {
    const auto batch = sample_batch(data, oracle, tc, rng);
    benchmark::DoNotOptimize(evaluate_batch(p, batch, tc.variant, LossWeights{}, true));
  }
}
BENCHMARK(BM_TrainStep);

void BM_SimulateUtterance(benchmark::State& state) {
  SynthConfig c;
  const Oracle oracle(c);
  const auto data = generate_dataset(c, 16);
  const auto p = PolicyParams::init(policy_config_for(PolicyVariant::kReina, 16), 4);
  StreamConfig sc;
  std::size_t i = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(simulate(oracle, p, data[i++ % data.size()], PolicyVariant::kReina, sc));
}
BENCHMARK(BM_SimulateUtterance);

void BM_CorpusBleu(benchmark::State& state) {
  std::mt19937_64 rng(5);
  std::vector<TokenSeq> hyps, refs;
  for (int s = 0; s < state.range(0); ++s) {
    TokenSeq r;
    for (int i = 0; i < 10; ++i) r.push_back(static_cast<int>(rng() % 50));
    auto h = r;
    h[rng() % h.size()] = 0;
    hyps.push_back(h);
    refs.push_back(r);
  }
  for (auto _ : state) benchmark::DoNotOptimize(bleu(hyps, refs));
}
BENCHMARK(BM_CorpusBleu)->Arg(200);

}  // namespace
BENCHMARK_MAIN();
