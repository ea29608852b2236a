#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "driftfuse/data.hpp"
#include "driftfuse/fusion.hpp"
#include "driftfuse/nn.hpp"
#include "driftfuse/reservoir.hpp"
#include "driftfuse/two_stream.hpp"

namespace driftfuse {

enum class WarmupScope { global, per_task };
enum class StageAccuracy { pooled, mean };

struct AblationFlags {
  bool disentangle = true;  // two-stream objective with blocking, S weighting, GCE
  bool fusion = true;       // QR weight fusion of E_i at task boundaries
  bool swap = true;         // counterfactual feature swapping

  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

struct TrainConfig {
  ModelShape model;  // feature_dim and num_classes are taken from the data
  double q = 0.7;
  double lambda = 5.0;
  std::uint64_t warmup_steps = 1000;
  WarmupScope warmup_scope = WarmupScope::global;
  FusionConfig fusion;
  OptimizerConfig optimizer;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  AblationFlags ablation;
  std::size_t reservoir_capacity = 512;
  StageAccuracy stage_accuracy = StageAccuracy::pooled;
};

void validate(const TrainConfig& cfg);

/// Independent random streams so toggling one mechanism never shifts the
/// draws of another (e.g. enabling swaps leaves dropout masks untouched).
struct RngStreams {
  Rng init;
  Rng shuffle;
  Rng dropout;
  Rng swap;
  Rng fusion;
  Rng reservoir;

  static RngStreams from_seed(std::uint64_t seed);
  friend bool operator==(const RngStreams&, const RngStreams&) = default;
};

/// Stage-by-domain accuracy grid. Columns are the training domains followed
/// by the unseen ones; row t is filled after finishing task t.
struct AccuracyMatrix {
  std::vector<std::string> domain_names;
  std::size_t train_domains = 0;
  std::size_t unseen_domains = 0;
  std::vector<std::vector<double>> grid;
  std::vector<double> stage_pooled;  // correct / total over seen test splits
  std::vector<double> stage_mean;    // mean of per-domain seen accuracies
  std::vector<double> stage_acc;     // whichever of the two the config selects

  friend bool operator==(const AccuracyMatrix&, const AccuracyMatrix&) = default;
};

double average_incremental_accuracy(std::span<const double> stage_acc);
double last_accuracy(std::span<const double> stage_acc);

struct RunReport {
  double avg = 0.0;
  double last = 0.0;
  std::vector<double> forgetting;  // A[d][d] - A[T-1][d] per training domain
  std::optional<double> unseen_accuracy;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t total_steps = 0;
};

RunReport summarize(const AccuracyMatrix& acc, std::uint64_t seed);

struct TrainerState {
  TwoStreamModel model;
  DomainFeatureReservoir reservoir;
  std::optional<FusionSnapshot> snapshot;
  std::uint64_t global_step = 0;
  std::size_t tasks_completed = 0;
  RngStreams rng;
  AccuracyMatrix accuracy;

  friend bool operator==(const TrainerState&, const TrainerState&) = default;
};

TrainerState initial_state(const TrainConfig& cfg, std::size_t feature_dim,
                           std::size_t num_classes);

struct TaskTrace {
  std::vector<double> losses;  // total objective per step
  std::size_t swap_steps = 0;  // steps where the swap term contributed
  std::size_t fused_layers = 0;
};

/// Trains the next task in place: fuse E_i from the previous snapshot (when
/// enabled), run the mini-batch loop, then capture the new snapshot and
/// rebuild the donor reservoir from this task. Throws NumericalError on a
/// non-finite loss.
void train_task(TrainerState& state, const FeatureBatch& train, const TrainConfig& cfg,
                TaskTrace* trace = nullptr);

struct EvalCounts {
  std::size_t correct = 0;
  std::size_t total = 0;
};

/// Intrinsic-head predictions against labels. Only features and labels are
/// consulted; domain ids are not part of the interface.
EvalCounts count_correct(const TwoStreamModel& model, const Matrix& features,
                         std::span<const std::uint32_t> labels);

template <LabeledFeatures Split>
double evaluate(const TwoStreamModel& model, const Split& split) {
  const EvalCounts c = count_correct(model, split.features(), split.labels());
  return static_cast<double>(c.correct) / static_cast<double>(c.total);
}

/// Fills the next row of state.accuracy from every domain's test split.
void record_stage(TrainerState& state, const DomainStream& stream, const TrainConfig& cfg);

struct RunOptions {
  std::optional<std::filesystem::path> checkpoint_path;  // rewritten after every task
  std::optional<std::size_t> stop_after_tasks;
  std::vector<TaskTrace>* traces = nullptr;
};

struct RunResult {
  AccuracyMatrix accuracy;
  RunReport report;
  TrainerState state;
  bool complete = false;
};

RunResult run_sequence(const DomainStream& stream, const TrainConfig& cfg, RunOptions opts = {});

/// Continues a run from a saved state.
RunResult resume_sequence(const DomainStream& stream, const TrainConfig& cfg, TrainerState state,
                          RunOptions opts = {});

}  // namespace driftfuse
