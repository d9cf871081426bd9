#include <random>

#include <benchmark/benchmark.h>

#include "vidpriv/anonymizer.hpp"
#include "vidpriv/metrics.hpp"
#include "vidpriv/ssl_privacy.hpp"

namespace {

void BM_NtXent(benchmark::State& state) {
  torch::NoGradGuard no_grad;
  torch::manual_seed(0);
  const auto n = state.range(0);
  auto z = torch::randn({n, 128});
  auto zp = torch::randn({n, 128});
  for (auto _ : state) benchmark::DoNotOptimize(vidpriv::nt_xent(z, zp, 0.5));
}
BENCHMARK(BM_NtXent)->Arg(16)->Arg(64)->Arg(256);

void BM_Cmap(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  std::mt19937 rng(0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  vidpriv::Matrix scores(rows, 5), labels(rows, 5);
  for (auto& v : scores.data) v = u(rng);
  for (auto& v : labels.data) v = u(rng) < 0.3 ? 1.0 : 0.0;
  for (std::size_t c = 0; c < 5; ++c) labels(0, c) = 1.0;
  for (auto _ : state) benchmark::DoNotOptimize(vidpriv::cmap(scores, labels));
}
BENCHMARK(BM_Cmap)->Arg(100)->Arg(1000)->Arg(10000);

void BM_AnonymizerForward(benchmark::State& state) {
  torch::NoGradGuard no_grad;
  torch::manual_seed(0);
  const int side = static_cast<int>(state.range(0));
  vidpriv::AnonymizerNet net(vidpriv::AnonymizerArch::preset("toy"));
  net->eval();
  auto frames = torch::rand({8, 3, side, side});
  for (auto _ : state) benchmark::DoNotOptimize(net->forward(frames));
}
BENCHMARK(BM_AnonymizerForward)->Arg(32)->Arg(112)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
