#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "unidg/adapt.hpp"
#include "unidg/layers.hpp"
#include "unidg/losses.hpp"
#include "unidg/memory_bank.hpp"

using namespace unidg;

namespace {

Tensor2 random_tensor(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::normal_distribution<double> n;
  Tensor2 t(r, c);
  for (double& v : t.values()) v = n(rng);
  return t;
}

void BM_LinearForward(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor2 x = random_tensor(rng, n, 64), w = random_tensor(rng, 64, 64);
  const std::vector<double> b(64, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(linear_forward(x, w, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_LinearForward)->Arg(32)->Arg(256);

void BM_BatchNormForwardBackward(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const Tensor2 x = random_tensor(rng, 32, 64), up = random_tensor(rng, 32, 64);
  const NormLayerState st = NormLayerState::identity(64);
  for (auto _ : state) {
    NormCache cache;
    batchnorm_apply(x, st, NormMode::batch, &cache);
    benchmark::DoNotOptimize(batchnorm_backward(st, cache, up));
  }
}
BENCHMARK(BM_BatchNormForwardBackward);

void BM_MarginalLoss(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const Tensor2 a = random_tensor(rng, 32, 32), s = random_tensor(rng, 32, 32);
  for (auto _ : state) benchmark::DoNotOptimize(marginal_loss(a, s, 0.15));
}
BENCHMARK(BM_MarginalLoss);

void BM_BankInsertAndPrototypes(benchmark::State& state) {
  std::mt19937_64 rng(4);
  const auto cls = LinearClassifier::initialized(32, 4, 4);
  auto bank = MemoryBank::init_from_classifier(cls, 64, 20);
  const Tensor2 f = random_tensor(rng, 32, 32);
  std::vector<std::size_t> labels(32);
  std::vector<double> h(32);
  std::uniform_real_distribution<double> u(0.0, 1.38);
  for (std::size_t i = 0; i < 32; ++i) {
    labels[i] = i % 4;
    h[i] = u(rng);
  }
  for (auto _ : state) {
    bank.insert(f, labels, h);
    benchmark::DoNotOptimize(bank.compute_prototypes());
  }
}
BENCHMARK(BM_BankInsertAndPrototypes);

void BM_AdaptPass(benchmark::State& state) {
  ShiftSpec spec;
  spec.seed = 5;
  const auto shift = gen_synthetic_shift(spec);
  const auto enc = MlpEncoder::initialized({16, 64, 64, 32}, false, 5);
  const auto cls = LinearClassifier::initialized(32, 4, 12);
  AdaptConfig cfg;
  cfg.method = static_cast<Method>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(run_adaptation(ModelPair::clone_for_adaptation(enc, cls), shift.target, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(shift.target.size()));
}
BENCHMARK(BM_AdaptPass)
    ->Arg(static_cast<int>(Method::none))
    ->Arg(static_cast<int>(Method::pseudo_label))
    ->Arg(static_cast<int>(Method::unidg))
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
