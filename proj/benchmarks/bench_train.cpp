#include <benchmark/benchmark.h>

#include "driftfuse/data.hpp"
#include "driftfuse/trainer.hpp"

using namespace driftfuse;

namespace {

// One epoch over a single synthetic task with every component enabled.
void BM_TrainEpoch(benchmark::State& state) {
  SyntheticConfig sc;
  sc.samples_per_domain = static_cast<std::size_t>(state.range(0));
  const DomainStream stream = generate_synthetic(sc);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.warmup_steps = 0;
  for (auto _ : state) {
    state.PauseTiming();
    TrainerState s = initial_state(cfg, stream.feature_dim, stream.num_classes);
    state.ResumeTiming();
    train_task(s, stream.tasks[0].train, cfg);
    benchmark::DoNotOptimize(s.model);
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<std::int64_t>(stream.tasks[0].train.size()));
}
BENCHMARK(BM_TrainEpoch)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_Predict(benchmark::State& state) {
  const DomainStream stream = generate_synthetic(SyntheticConfig{});
  const TrainConfig cfg;
  const TrainerState s = initial_state(cfg, stream.feature_dim, stream.num_classes);
  const Matrix& h = stream.tasks[0].test.features();
  for (auto _ : state) benchmark::DoNotOptimize(predict(s.model, h));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(h.rows()));
}
BENCHMARK(BM_Predict)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
