#include <benchmark/benchmark.h>

#include <vector>

#include "relab/net.hpp"
#include "relab/rng.hpp"

using namespace relab;

namespace {

NetParams make_net(int input_dim, Head head) {
  NetConfig cfg;
  cfg.input_dim = input_dim;
  cfg.head = head;
  cfg.seed = 1;
  return init_params(cfg);
}

std::vector<double> make_input(int dim) {
  Rng rng(2);
  std::vector<double> x(static_cast<std::size_t>(dim));
  for (auto& v : x) v = rng.normal();
  return x;
}

void BM_Forward(benchmark::State& state) {
  const auto dim = static_cast<int>(state.range(0));
  const auto params = make_net(dim, Head::SigmoidClassifier);
  const auto x = make_input(dim);
  for (auto _ : state) {
    auto out = forward(params, x);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(64)->Arg(256);

void BM_BceBackprop(benchmark::State& state) {
  const auto dim = static_cast<int>(state.range(0));
  const auto params = make_net(dim, Head::SigmoidClassifier);
  Example ex{"x", make_input(dim), 1};
  const std::vector<Example> batch{ex};
  for (auto _ : state) {
    auto grads = bce_backprop(params, batch);
    benchmark::DoNotOptimize(grads);
  }
}
BENCHMARK(BM_BceBackprop)->Arg(16)->Arg(64)->Arg(256);

void BM_TrainEpochs(benchmark::State& state) {
  Rng rng(3);
  std::vector<Example> data;
  for (int i = 0; i < 200; ++i) {
    Example ex;
    ex.id = "x" + std::to_string(i);
    ex.label = i % 2;
    for (int d = 0; d < 16; ++d) ex.features.push_back(rng.normal(ex.label ? 1.0 : -1.0, 1.0));
    data.push_back(std::move(ex));
  }
  TrainConfig cfg;
  cfg.epochs = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto params = train(cfg, NetConfig{}, data);
    benchmark::DoNotOptimize(params);
  }
}
BENCHMARK(BM_TrainEpochs)->Arg(1)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
