#include <gtest/gtest.h>

#include <cmath>

#include "driftfuse/checkpoint.hpp"
#include "driftfuse/config.hpp"
#include "driftfuse/errors.hpp"
#include "driftfuse/report.hpp"
#include "support/fixtures.hpp"
#include "support/temp_dir.hpp"

namespace driftfuse {
namespace {

using testing::tiny_synthetic;
using testing::tiny_train;

TEST(Metrics, AverageAndLast) {
  const std::vector<double> two{0.80, 0.90};
  EXPECT_DOUBLE_EQ(average_incremental_accuracy(two), 0.85);
  EXPECT_EQ(last_accuracy(two), 0.90);
  const std::vector<double> one{0.42};
  EXPECT_EQ(average_incremental_accuracy(one), 0.42);
  EXPECT_EQ(last_accuracy(one), 0.42);
  EXPECT_THROW(average_incremental_accuracy({}), ShapeError);
  EXPECT_THROW(last_accuracy({}), ShapeError);
}

TEST(Metrics, SummarizeGrid) {
  AccuracyMatrix a;
  a.domain_names = {"a", "b", "u"};
  a.train_domains = 2;
  a.unseen_domains = 1;
  a.grid = {{0.9, 0.1, 0.3}, {0.7, 0.8, 0.5}};
  a.stage_acc = {0.9, 0.75};
  const RunReport r = summarize(a, 4);
  EXPECT_DOUBLE_EQ(r.avg, 0.825);
  EXPECT_EQ(r.last, 0.75);
  ASSERT_EQ(r.forgetting.size(), 2u);
  EXPECT_DOUBLE_EQ(r.forgetting[0], 0.2);
  EXPECT_DOUBLE_EQ(r.forgetting[1], 0.0);
  EXPECT_EQ(r.unseen_accuracy, 0.5);
  EXPECT_EQ(r.seed, 4u);
}

TEST(Evaluate, ConstantPredictor) {
  Rng rng(0);
  TwoStreamModel m = make_two_stream({5, 4, 3, 3, 2, 0.0}, rng);
  m.intrinsic_classifier.weight.fill(0.0);
  m.intrinsic_classifier.bias = {0.0, 1.0, 0.0};
  FeatureBatch split(Matrix(7, 5, 0.3), std::vector<std::uint32_t>(7, 1),
                     std::vector<std::uint16_t>(7, 0));
  EXPECT_EQ(evaluate(m, split), 1.0);
  EXPECT_EQ(evaluate(m, concat(split, split)), 1.0);
  EXPECT_THROW(evaluate(m, FeatureBatch(5)), ShapeError);
}

TEST(Evaluate, UntrainedModelIsNearChance) {
  SyntheticConfig s;
  s.samples_per_domain = 4000;
  s.unseen_domains = 0;
  s.num_domains = 1;
  const auto pools = generate_domain_pools(s);
  // Average over several random models: one model can be lopsided, the
  // expectation over initializations is chance.
  double mean = 0.0;
  constexpr int models = 20;
  for (int k = 0; k < models; ++k) {
    const TrainerState st = initial_state(tiny_train(k), s.feature_dim, s.classes);
    mean += evaluate(st.model, pools[0]);
  }
  mean /= models;
  const double sigma = std::sqrt(0.1 * 0.9 / (4000.0 * models));
  EXPECT_NEAR(mean, 0.1, 3 * sigma + 0.02);
}

// The evaluation path accepts anything with features and labels, so a split
// type that has no domain ids at all must work and give the same answer.
struct LabelsOnly {
  Matrix f;
  std::vector<std::uint32_t> y;
  const Matrix& features() const { return f; }
  std::span<const std::uint32_t> labels() const { return y; }
};

TEST(Evaluate, NeverReadsDomainIds) {
  const DomainStream stream = generate_synthetic(tiny_synthetic());
  const RunResult run = run_sequence(stream, tiny_train());
  const FeatureBatch& test = stream.tasks[1].test;
  LabelsOnly blind{test.features(), {test.labels().begin(), test.labels().end()}};
  std::vector<std::uint16_t> scrambled(test.size(), 999);
  FeatureBatch relabelled(test.features(), blind.y, scrambled);
  const double a = evaluate(run.state.model, test);
  EXPECT_EQ(evaluate(run.state.model, blind), a);
  EXPECT_EQ(evaluate(run.state.model, relabelled), a);
  EXPECT_EQ(a, run.accuracy.grid.back()[1]);
}

TEST(TrainTask, LossesAreFiniteAndDecrease) {
  const DomainStream stream = generate_synthetic(tiny_synthetic());
  TrainConfig cfg = tiny_train();
  cfg.epochs = 10;
  TrainerState st = initial_state(cfg, stream.feature_dim, stream.num_classes);
  TaskTrace trace;
  train_task(st, stream.tasks[0].train, cfg, &trace);
  ASSERT_FALSE(trace.losses.empty());
  for (double l : trace.losses) EXPECT_TRUE(std::isfinite(l));
  // The swap term joins after warmup, so compare windows once it is active.
  const std::size_t n = trace.losses.size();
  ASSERT_GT(n, cfg.warmup_steps + 8);
  double head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    head += trace.losses[cfg.warmup_steps + i];
    tail += trace.losses[n - 1 - i];
  }
  EXPECT_LT(tail, head);
  EXPECT_EQ(st.tasks_completed, 1u);
  EXPECT_EQ(st.global_step, n);
  EXPECT_EQ(trace.swap_steps, n - cfg.warmup_steps);
}

TEST(TrainTask, BoundaryStateAfterEachTask) {
  const DomainStream stream = generate_synthetic(tiny_synthetic());
  const TrainConfig cfg = tiny_train();
  TrainerState st = initial_state(cfg, stream.feature_dim, stream.num_classes);
  for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
    TaskTrace trace;
    train_task(st, stream.tasks[t].train, cfg, &trace);
    EXPECT_EQ(trace.fused_layers, t == 0 ? 0u : 3u);
    ASSERT_TRUE(st.snapshot);
    EXPECT_EQ(st.snapshot->captured_task, t);
    EXPECT_EQ(st.snapshot->layers[0].weight, st.model.intrinsic_encoder.layers[0].weight);
    EXPECT_EQ(st.reservoir.source_task(), t);
    EXPECT_EQ(st.reservoir.size(), cfg.reservoir_capacity);
    EXPECT_EQ(st.reservoir.seen(), stream.tasks[t].train.size());
  }
}

TEST(TrainTask, InfiniteWarmupEqualsZeroLambda) {
  const DomainStream stream = generate_synthetic(tiny_synthetic());
  TrainConfig never = tiny_train();
  never.warmup_steps = std::numeric_limits<std::uint64_t>::max();
  TrainConfig zero = tiny_train();
  zero.lambda = 0.0;
  std::vector<TaskTrace> a, b;
  const RunResult ra = run_sequence(stream, never, {.traces = &a});
  const RunResult rb = run_sequence(stream, zero, {.traces = &b});
  for (std::size_t t = 0; t < a.size(); ++t) {
    EXPECT_EQ(a[t].losses, b[t].losses);
    EXPECT_EQ(a[t].swap_steps, 0u);
  }
  EXPECT_EQ(ra.state.model, rb.state.model);
}

TEST(TrainTask, ZeroLearningRateLeavesModelUnchanged) {
  const DomainStream stream = generate_synthetic(tiny_synthetic());
  TrainConfig cfg = tiny_train();
  cfg.optimizer.learning_rate = 0.0;
  cfg.ablation.fusion = false;
  TrainerState st = initial_state(cfg, stream.feature_dim, stream.num_classes);
  const TwoStreamModel before = st.model;
  train_task(st, stream.tasks[0].train, cfg);
  EXPECT_EQ(st.model, before);
}

TEST(TrainTask, PerTaskWarmupRestartsAtBoundaries) {
  const DomainStream stream = generate_synthetic(tiny_synthetic());
  TrainConfig cfg = tiny_train();
  cfg.warmup_scope = WarmupScope::per_task;
  std::vector<TaskTrace> traces;
  run_sequence(stream, cfg, {.traces = &traces});
  for (const auto& t : traces) EXPECT_EQ(t.swap_steps, t.losses.size() - cfg.warmup_steps);
}

TEST(TrainTask, AllOffIsPlainFineTuning) {
  const DomainStream stream = generate_synthetic(tiny_synthetic());
  TrainConfig cfg = tiny_train();
  cfg.ablation = {false, false, false};
  std::vector<TaskTrace> traces;
  const RunResult r = run_sequence(stream, cfg, {.traces = &traces});
  EXPECT_FALSE(r.state.snapshot);
  EXPECT_TRUE(r.state.reservoir.empty());
  for (const auto& t : traces) {
    EXPECT_EQ(t.swap_steps, 0u);
    EXPECT_EQ(t.fused_layers, 0u);
  }
}

TEST(TrainTask, NonFiniteInputRaisesNumericalError) {
  const DomainStream stream = generate_synthetic(tiny_synthetic());
  TrainConfig cfg = tiny_train();
  TrainerState st = initial_state(cfg, stream.feature_dim, stream.num_classes);
  Matrix f = stream.tasks[0].train.features();
  f(3, 2) = std::numeric_limits<double>::infinity();
  const auto& src = stream.tasks[0].train;
  FeatureBatch bad(f, {src.labels().begin(), src.labels().end()},
                   {src.domain_ids().begin(), src.domain_ids().end()});
  EXPECT_THROW(train_task(st, bad, cfg), NumericalError);
}

TEST(TrainTask, RejectsMismatchedInput) {
  TrainConfig cfg = tiny_train();
  TrainerState st = initial_state(cfg, 12, 4);
  EXPECT_THROW(train_task(st, FeatureBatch(12), cfg), ShapeError);
  FeatureBatch wide(Matrix(2, 5), {0, 1}, {0, 0});
  EXPECT_THROW(train_task(st, wide, cfg), ShapeError);
}

TEST(RngStreams, IndependentAndSeeded) {
  const auto a = RngStreams::from_seed(3);
  EXPECT_EQ(a, RngStreams::from_seed(3));
  EXPECT_NE(a, RngStreams::from_seed(4));
  Rng init = a.init, shuffle = a.shuffle;
  EXPECT_NE(init(), shuffle());
}

TEST(TrainConfig, Validation) {
  TrainConfig c = tiny_train();
  EXPECT_NO_THROW(validate(c));
  c.q = 0.0;
  EXPECT_THROW(validate(c), ConfigError);
  c = tiny_train();
  c.lambda = -1.0;
  EXPECT_THROW(validate(c), ConfigError);
  c = tiny_train();
  c.batch_size = 0;
  EXPECT_THROW(validate(c), ConfigError);
  c = tiny_train();
  c.model.dropout = 1.0;
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(RunSequence, FillsAccuracyMatrix) {
  const DomainStream stream = generate_synthetic(tiny_synthetic());
  const RunResult r = run_sequence(stream, tiny_train());
  EXPECT_TRUE(r.complete);
  const AccuracyMatrix& a = r.accuracy;
  ASSERT_EQ(a.grid.size(), 3u);
  EXPECT_EQ(a.domain_names.size(), 4u);
  for (std::size_t t = 0; t < 3; ++t) {
    ASSERT_EQ(a.grid[t].size(), 4u);
    // Pooled and mean seen accuracy recomputed from the grid.
    double mean = 0.0, correct = 0.0, total = 0.0;
    for (std::size_t d = 0; d <= t; ++d) {
      const double n = static_cast<double>(stream.tasks[d].test.size());
      mean += a.grid[t][d];
      correct += std::round(a.grid[t][d] * n);
      total += n;
    }
    EXPECT_DOUBLE_EQ(a.stage_mean[t], mean / static_cast<double>(t + 1));
    EXPECT_DOUBLE_EQ(a.stage_pooled[t], correct / total);
    EXPECT_EQ(a.stage_acc[t], a.stage_pooled[t]);
  }
  double avg = 0.0;
  for (double s : a.stage_acc) avg += s;
  EXPECT_EQ(r.report.avg, avg / 3.0);
  EXPECT_EQ(r.report.last, a.stage_acc.back());
  EXPECT_EQ(r.report.unseen_accuracy, a.grid.back()[3]);
  EXPECT_GT(r.report.total_steps, 0u);
}

TEST(RunSequence, StageAccuracyMean) {
  const DomainStream stream = generate_synthetic(tiny_synthetic());
  TrainConfig cfg = tiny_train();
  cfg.stage_accuracy = StageAccuracy::mean;
  const RunResult r = run_sequence(stream, cfg);
  EXPECT_EQ(r.accuracy.stage_acc, r.accuracy.stage_mean);
}

TEST(RunSequence, DeterministicMetrics) {
  const DomainStream stream = generate_synthetic(tiny_synthetic());
  const RunResult a = run_sequence(stream, tiny_train(5));
  const RunResult b = run_sequence(stream, tiny_train(5));
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_EQ(a.state, b.state);
  EXPECT_EQ(metrics_csv(a.accuracy), metrics_csv(b.accuracy));
  const RunResult c = run_sequence(stream, tiny_train(6));
  EXPECT_NE(a.state.model, c.state.model);
}

TEST(RunSequence, ResumeMatchesUninterruptedRun) {
  const DomainStream stream = generate_synthetic(tiny_synthetic());
  const TrainConfig cfg = tiny_train(2);
  testing::TempDir dir("resume");
  const RunResult full = run_sequence(stream, cfg);

  for (std::size_t stop : {1u, 2u}) {
    const auto ckpt = dir / ("stop" + std::to_string(stop) + ".bin");
    const RunResult part =
        run_sequence(stream, cfg, {.checkpoint_path = ckpt, .stop_after_tasks = stop});
    EXPECT_FALSE(part.complete);
    EXPECT_EQ(part.state.tasks_completed, stop);
    const Checkpoint cp = load_checkpoint(ckpt);
    EXPECT_EQ(cp.config_text, to_ini(cfg));
    EXPECT_EQ(cp.state, part.state);
    const RunResult resumed = resume_sequence(stream, cfg, cp.state);
    EXPECT_EQ(resumed.state, full.state);
    EXPECT_EQ(metrics_csv(resumed.accuracy), metrics_csv(full.accuracy));
  }
}

TEST(RunSequence, RejectsEmptyTestSplit) {
  DomainStream stream = generate_synthetic(tiny_synthetic());
  stream.unseen[0].test = FeatureBatch(stream.feature_dim);
  EXPECT_THROW(run_sequence(stream, tiny_train()), ShapeError);
}

}  // namespace
}  // namespace driftfuse
