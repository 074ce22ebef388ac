#include <benchmark/benchmark.h>

#include "octopus/dpo.hpp"
#include "octopus/experiments.hpp"

namespace {

using namespace octopus;

Matrix random_states(std::size_t rows, std::uint64_t seed) {
  Rng r(seed, "bench");
  Matrix m(rows, 32);
  for (double& v : m.flat()) v = r.normal();
  return m;
}

void BM_HeadForward(benchmark::State& state) {
  const HeadParams head = init_head(HeadConfig{}, 1);
  const Matrix h = random_states(static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(head_forward(head, h));
}
BENCHMARK(BM_HeadForward)->Arg(12)->Arg(26)->Arg(63);

void BM_HeadBackward(benchmark::State& state) {
  const HeadParams head = init_head(HeadConfig{}, 1);
  const Matrix h = random_states(static_cast<std::size_t>(state.range(0)), 2);
  const ForwardTrace tr = head_forward(head, h);
  const RealVector d = {0.1, -0.2, 0.3, -0.2};
  RealVector grad(head.config().param_count());
  for (auto _ : state) {
    head_backward_accumulate(head, tr, d, grad);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_HeadBackward)->Arg(12)->Arg(26)->Arg(63);

void BM_DecodeDescribe(benchmark::State& state) {
  const SimLvlm model;
  DatasetConfig cfg;
  cfg.n_describe = 64;
  const Dataset ds = gen_dataset(cfg, 3);
  const auto a = static_cast<Action>(state.range(0));
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        decode_policy(model, ds[i++ % ds.size()], Policy::fixed_action(a), CdConfig{}));
  }
}
BENCHMARK(BM_DecodeDescribe)->DenseRange(0, 3);

void BM_DecodeWithHead(benchmark::State& state) {
  const SimLvlm model;
  const HeadParams head = init_head(HeadConfig{}, 1);
  DatasetConfig cfg;
  cfg.n_describe = 64;
  const Dataset ds = gen_dataset(cfg, 3);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(decode_with_policy(model, ds[i++ % ds.size()], head, CdConfig{}));
  }
}
BENCHMARK(BM_DecodeWithHead);

void BM_DpoPairGradient(benchmark::State& state) {
  const SimLvlm model;
  DatasetConfig cfg;
  cfg.n_describe = 40;
  const Dataset ds = gen_dataset(cfg, 3);
  const auto pairs = generative_pairs(model, ds, Criterion::kChair, 10, 4, CdConfig{}, 8);
  const auto tp = prepare_pairs(model, ds, pairs, CdConfig{});
  const HeadParams head = init_head(HeadConfig{}, 1);
  RealVector grad(head.config().param_count());
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(dpo_loss_grad(head, tp[i++ % tp.size()], 1.0, 1.0, grad));
  }
}
BENCHMARK(BM_DpoPairGradient);

}  // namespace

BENCHMARK_MAIN();
