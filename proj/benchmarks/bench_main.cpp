#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "ddp/baselines.hpp"
#include "ddp/config.hpp"
#include "ddp/fixtures.hpp"
#include "ddp/rng.hpp"
#include "ddp/surrogate.hpp"
#include "ddp/trainer.hpp"

namespace {

ddp::RunConfig fixture_config(const char* file) {
  return ddp::load_config(std::string(DDP_FIXTURE_DIR) + "/" + file);
}

std::vector<double> random_logits(std::size_t k, std::uint64_t seed) {
  ddp::Philox4x32 rng(seed);
  std::vector<double> z(k);
  for (auto& v : z) v = rng.uniform() - 0.5;
  return z;
}

void BM_RetentionScores(benchmark::State& state) {
  const auto z = random_logits(static_cast<std::size_t>(state.range(0)), 1);
  const auto p = ddp::SurrogateParams::defaults();
  for (auto _ : state) benchmark::DoNotOptimize(ddp::retention_scores(z, 0.2, p));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RetentionScores)->Arg(64)->Arg(4096);

void BM_SurrogateBackward(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  const auto z = random_logits(k, 2);
  const std::vector<double> up(k, 1.0);
  const auto p = ddp::SurrogateParams::defaults();
  for (auto _ : state) benchmark::DoNotOptimize(ddp::surrogate_backward(z, 0.2, p, up));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SurrogateBackward)->Arg(64)->Arg(4096);

void BM_LossAndMaskGrads(benchmark::State& state, const char* file) {
  const auto cfg = fixture_config(file);
  const auto f = ddp::make_fixture(cfg.fixture, cfg.seed);
  const std::vector<double> m(f.model->num_components(), 0.7);
  const ddp::ComponentModel* teacher =
      f.data.tokens.empty() ? nullptr : f.model.get();
  for (auto _ : state)
    benchmark::DoNotOptimize(
        f.model->loss_and_mask_grads(f.data, m, teacher, 1.0, cfg.train.kl_reduction));
}
BENCHMARK_CAPTURE(BM_LossAndMaskGrads, planted12, "planted12.json");
BENCHMARK_CAPTURE(BM_LossAndMaskGrads, toy_moe, "toy_moe.json");
BENCHMARK_CAPTURE(BM_LossAndMaskGrads, tiny_transformer, "tiny_transformer_char.json")
    ->Unit(benchmark::kMillisecond);

void BM_TrainSteps(benchmark::State& state) {
  auto cfg = fixture_config("planted8.json");
  cfg.train.total_steps = 100;
  const auto f = ddp::make_fixture(cfg.fixture, cfg.seed);
  for (auto _ : state) benchmark::DoNotOptimize(ddp::train_masks(*f.model, f.data, cfg.train));
  state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_TrainSteps)->Unit(benchmark::kMillisecond);

void BM_Oracle(benchmark::State& state) {
  const auto cfg = fixture_config("planted12.json");
  const auto f = ddp::make_fixture(cfg.fixture, cfg.seed);
  const auto p = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(ddp::brute_force_l0(*f.model, f.data, p));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(ddp::choose(12, p)));
}
BENCHMARK(BM_Oracle)->Arg(3)->Arg(6)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
