#include <benchmark/benchmark.h>

#include "hublab/hubness.hpp"
#include "hublab/losses.hpp"
#include "hublab/synth.hpp"
#include "hublab/trainer.hpp"
#include "hublab/transport.hpp"

using namespace hublab;

namespace {

SimilarityMatrix random_scores(Eigen::Index n, Eigen::Index m, std::uint64_t seed) {
  Rng rng(seed);
  Matrix s(n, m);
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = 2.0 * rng.uniform() - 1.0;
  return {s, 1.0};
}

void BM_Cosine(benchmark::State& state) {
  SynthConfig c;
  c.n_pairs = static_cast<std::size_t>(state.range(0));
  const auto d = synth_generate(c).data;
  for (auto _ : state) benchmark::DoNotOptimize(cosine_similarity_matrix(d.queries, d.galleries));
}
BENCHMARK(BM_Cosine)->Arg(256)->Arg(1024);

void BM_HubnessReport(benchmark::State& state) {
  const auto s = random_scores(state.range(0), state.range(0), 1);
  for (auto _ : state) benchmark::DoNotOptimize(hubness_report(s, {15, 2.0, 0.5}));
}
BENCHMARK(BM_HubnessReport)->Arg(256)->Arg(1000);

void BM_Sinkhorn(benchmark::State& state) {
  const auto s = random_scores(state.range(0), state.range(0), 2);
  SinkhornOptions o;
  o.strict = false;
  for (auto _ : state) benchmark::DoNotOptimize(sinkhorn_plan(s, o));
}
BENCHMARK(BM_Sinkhorn)->Arg(64)->Arg(128);

void BM_LossWti(benchmark::State& state) {
  const auto s = random_scores(state.range(0), state.range(0), 3);
  const std::vector<double> w(static_cast<std::size_t>(state.range(0)), 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(loss_wti(s, w));
}
BENCHMARK(BM_LossWti)->Arg(128);

void BM_LossNbi(benchmark::State& state) {
  const auto s = random_scores(state.range(0), state.range(0), 4);
  for (auto _ : state) benchmark::DoNotOptimize(loss_nbi_batch(s, s, 20));
}
BENCHMARK(BM_LossNbi)->Arg(128);

void BM_TrainEpoch(benchmark::State& state) {
  SynthConfig c;
  c.n_pairs = 512;
  const auto d = synth_generate(c).data;
  TrainConfig t;
  t.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train(t, d));
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
