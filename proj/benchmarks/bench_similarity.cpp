#include <benchmark/benchmark.h>

#include "relab/relabel.hpp"
#include "relab/siamese.hpp"
#include "relab/synth.hpp"

using namespace relab;

namespace {

GeneratedData make_data(int n_refs) {
  GeneratorConfig cfg;
  cfg.n_noisy = 64;
  cfg.n_reference = n_refs;
  cfg.seed = 5;
  return generate(cfg);
}

void BM_SimilarityRanking(benchmark::State& state) {
  const auto data = make_data(static_cast<int>(state.range(0)));
  NetConfig cfg;
  cfg.input_dim = 16;
  cfg.head = Head::Embedding;
  cfg.seed = 7;
  const auto params = init_params(cfg);
  const SimilarityIndex index(params, data.reference);
  std::size_t i = 0;
  for (auto _ : state) {
    auto ranked = index.rank(data.noisy[i++ % data.noisy.size()]);
    benchmark::DoNotOptimize(ranked);
  }
}
BENCHMARK(BM_SimilarityRanking)->Arg(180)->Arg(720);

void BM_RelabelComparator(benchmark::State& state) {
  const auto data = make_data(180);
  NetConfig cfg;
  cfg.input_dim = 16;
  cfg.head = Head::Embedding;
  cfg.seed = 7;
  const auto params = init_params(cfg);
  RelabelConfig rc;
  for (auto _ : state) {
    auto outcomes = relabel_comparator(params, data.noisy, data.reference, rc);
    benchmark::DoNotOptimize(outcomes);
  }
}
BENCHMARK(BM_RelabelComparator)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
