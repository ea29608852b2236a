#include "driftfuse/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "driftfuse/checkpoint.hpp"
#include "driftfuse/config.hpp"
#include "driftfuse/errors.hpp"

namespace driftfuse {

void validate(const TrainConfig& cfg) {
  if (!(cfg.q > 0.0 && cfg.q <= 1.0)) throw ConfigError("train.q must lie in (0, 1]");
  if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda)) {
    throw ConfigError("train.lambda must be a finite value >= 0");
  }
  if (cfg.batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (cfg.epochs == 0) throw ConfigError("train.epochs must be >= 1");
  if (!(cfg.optimizer.learning_rate >= 0.0)) throw ConfigError("optimizer.lr must be >= 0");
  if (cfg.optimizer.clip_norm < 0.0) throw ConfigError("optimizer.clip_norm must be >= 0");
  if (cfg.model.dropout < 0.0 || cfg.model.dropout >= 1.0) {
    throw ConfigError("model.dropout must lie in [0, 1)");
  }
  if (cfg.model.encoder_layers < 1 || cfg.model.latent_dim < 1 || cfg.model.hidden_width < 1) {
    throw ConfigError("model widths and layer count must be >= 1");
  }
  validate(cfg.fusion);
}

RngStreams RngStreams::from_seed(std::uint64_t seed) {
  auto make = [seed](std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      stream};
    return Rng(seq);
  };
  return {make(1), make(2), make(3), make(4), make(5), make(6)};
}

double average_incremental_accuracy(std::span<const double> stage_acc) {
  if (stage_acc.empty()) throw ShapeError("average_incremental_accuracy: no stages");
  return std::accumulate(stage_acc.begin(), stage_acc.end(), 0.0) /
         static_cast<double>(stage_acc.size());
}

double last_accuracy(std::span<const double> stage_acc) {
  if (stage_acc.empty()) throw ShapeError("last_accuracy: no stages");
  return stage_acc.back();
}

RunReport summarize(const AccuracyMatrix& acc, std::uint64_t seed) {
  RunReport r;
  r.seed = seed;
  r.avg = average_incremental_accuracy(acc.stage_acc);
  r.last = last_accuracy(acc.stage_acc);
  const std::size_t final_stage = acc.grid.size() - 1;
  for (std::size_t d = 0; d < acc.train_domains && d < acc.grid.size(); ++d) {
    r.forgetting.push_back(acc.grid[d][d] - acc.grid[final_stage][d]);
  }
  if (acc.unseen_domains > 0) {
    // Pooled accuracies are stored per domain; weight them back by size via
    // the unweighted mean here since unseen splits share one size in practice.
    double s = 0.0;
    for (std::size_t u = 0; u < acc.unseen_domains; ++u) {
      s += acc.grid[final_stage][acc.train_domains + u];
    }
    r.unseen_accuracy = s / static_cast<double>(acc.unseen_domains);
  }
  return r;
}

TrainerState initial_state(const TrainConfig& cfg, std::size_t feature_dim,
                           std::size_t num_classes) {
  validate(cfg);
  TrainerState s;
  s.rng = RngStreams::from_seed(cfg.seed);
  ModelShape shape = cfg.model;
  shape.feature_dim = feature_dim;
  shape.num_classes = num_classes;
  s.model = make_two_stream(shape, s.rng.init);
  s.reservoir = DomainFeatureReservoir(cfg.reservoir_capacity);
  return s;
}

namespace {

bool swap_enabled(const TrainConfig& cfg, std::uint64_t global_step, std::uint64_t task_step) {
  if (!cfg.ablation.swap || cfg.lambda == 0.0) return false;
  const std::uint64_t counter = cfg.warmup_scope == WarmupScope::global ? global_step : task_step;
  return counter >= cfg.warmup_steps;
}

void rebuild_reservoir(TrainerState& state, const FeatureBatch& train, std::size_t task) {
  state.reservoir.begin_task(task);
  constexpr std::size_t chunk = 512;
  std::vector<std::size_t> rows;
  for (std::size_t begin = 0; begin < train.size(); begin += chunk) {
    const std::size_t end = std::min(train.size(), begin + chunk);
    rows.resize(end - begin);
    std::iota(rows.begin(), rows.end(), begin);
    const FeatureBatch part = train.select(rows);
    const EncodedBatch enc =
        encode(state.model, part.features(), part.labels(), Mode::eval, nullptr);
    reservoir_update(state.reservoir, enc, state.rng.reservoir);
  }
}

}  // namespace

void train_task(TrainerState& state, const FeatureBatch& train, const TrainConfig& cfg,
                TaskTrace* trace) {
  if (train.empty()) throw ShapeError("train_task: empty training split");
  if (train.feature_dim() != state.model.feature_dim()) {
    throw ShapeError("train_task: feature width " + std::to_string(train.feature_dim()) +
                     " does not match model input " + std::to_string(state.model.feature_dim()));
  }
  const std::size_t task = state.tasks_completed;

  if (task > 0 && cfg.ablation.fusion && state.snapshot) {
    state.model = fuse_encoder(state.model, *state.snapshot, state.rng.fusion, cfg.fusion);
    if (trace) trace->fused_layers = state.snapshot->layers.size();
  }

  Optimizer optimizer(cfg.optimizer);
  std::vector<std::span<double>> param_views;
  collect_views(state.model, param_views);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::uint64_t task_step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), state.rng.shuffle);
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const FeatureBatch batch =
          train.select(std::span<const std::size_t>(order).subspan(begin, end - begin));
      const EncodedBatch enc =
          encode(state.model, batch.features(), batch.labels(), Mode::train, &state.rng.dropout);

      ObjectiveResult base = cfg.ablation.disentangle ? disentangle_loss(state.model, enc, cfg.q)
                                                      : joint_ce_loss(state.model, enc);
      HeadGradients head = std::move(base.grads);
      double l_sp = 0.0;
      bool swapped = false;
      if (swap_enabled(cfg, state.global_step, task_step)) {
        if (auto pairing = swap_features(enc, state.reservoir, state.rng.swap)) {
          ObjectiveResult sp = cfg.ablation.disentangle
                                   ? swap_loss(state.model, enc, *pairing, cfg.q)
                                   : joint_swap_ce_loss(state.model, enc, *pairing);
          head.add_scaled(sp.grads, cfg.lambda);
          l_sp = sp.value;
          swapped = true;
        }
      }
      const double loss = total_loss(base.value, l_sp, cfg.lambda, swapped);
      const TwoStreamGradients grads = backpropagate(state.model, enc, head);
      std::vector<std::span<const double>> grad_views;
      collect_views(grads, grad_views);
      if (!std::isfinite(loss) || !std::isfinite(global_norm(grad_views))) {
        throw NumericalError("non-finite loss or gradient at task " + std::to_string(task) + ", epoch " +
                             std::to_string(epoch) + ", batch starting at " +
                             std::to_string(begin) + ", global step " +
                             std::to_string(state.global_step) + " (seed " +
                             std::to_string(cfg.seed) + ")");
      }

      optimizer.step(param_views, grad_views);

      if (trace) {
        trace->losses.push_back(loss);
        if (swapped) ++trace->swap_steps;
      }
      ++state.global_step;
      ++task_step;
    }
  }

  if (cfg.ablation.fusion) {
    state.snapshot = capture_structure(state.model.intrinsic_encoder, task, cfg.fusion.fuse_biases);
  }
  if (cfg.ablation.swap) rebuild_reservoir(state, train, task);
  ++state.tasks_completed;
}

EvalCounts count_correct(const TwoStreamModel& model, const Matrix& features,
                         std::span<const std::uint32_t> labels) {
  if (features.rows() == 0) throw ShapeError("evaluate: empty split");
  if (labels.size() != features.rows()) throw ShapeError("evaluate: label count mismatch");
  EvalCounts c;
  c.total = labels.size();
  const std::vector<std::uint32_t> pred = predict(model, features);
  for (std::size_t i = 0; i < pred.size(); ++i) c.correct += pred[i] == labels[i] ? 1 : 0;
  return c;
}

void record_stage(TrainerState& state, const DomainStream& stream, const TrainConfig& cfg) {
  AccuracyMatrix& acc = state.accuracy;
  if (acc.domain_names.empty()) {
    acc.train_domains = stream.tasks.size();
    acc.unseen_domains = stream.unseen.size();
    for (std::size_t d = 0; d < stream.total_domains(); ++d) {
      acc.domain_names.push_back(stream.domain(d).name);
    }
  }
  const std::size_t stage = acc.grid.size();
  std::vector<double> row;
  std::size_t seen_correct = 0;
  std::size_t seen_total = 0;
  double seen_sum = 0.0;
  for (std::size_t d = 0; d < stream.total_domains(); ++d) {
    const FeatureBatch& test = stream.domain(d).test;
    const EvalCounts c = count_correct(state.model, test.features(), test.labels());
    const double a = static_cast<double>(c.correct) / static_cast<double>(c.total);
    row.push_back(a);
    if (d <= stage && d < stream.tasks.size()) {
      seen_correct += c.correct;
      seen_total += c.total;
      seen_sum += a;
    }
  }
  acc.grid.push_back(std::move(row));
  acc.stage_pooled.push_back(static_cast<double>(seen_correct) / static_cast<double>(seen_total));
  acc.stage_mean.push_back(seen_sum / static_cast<double>(stage + 1));
  acc.stage_acc.push_back(cfg.stage_accuracy == StageAccuracy::pooled ? acc.stage_pooled.back()
                                                                       : acc.stage_mean.back());
}

RunResult resume_sequence(const DomainStream& stream, const TrainConfig& cfg, TrainerState state,
                          RunOptions opts) {
  validate(cfg);
  if (stream.tasks.empty()) throw ShapeError("run_sequence: stream has no training domains");
  for (std::size_t d = 0; d < stream.total_domains(); ++d) {
    if (stream.domain(d).test.empty()) {
      throw ShapeError("run_sequence: domain '" + stream.domain(d).name + "' has an empty test split");
    }
  }
  if (state.accuracy.grid.size() != state.tasks_completed) {
    throw ShapeError("run_sequence: state has inconsistent stage count");
  }
  const auto started = std::chrono::steady_clock::now();
  const std::string config_text = to_ini(cfg);

  while (state.tasks_completed < stream.tasks.size()) {
    if (opts.stop_after_tasks && state.tasks_completed >= *opts.stop_after_tasks) break;
    TaskTrace trace;
    train_task(state, stream.tasks[state.tasks_completed].train, cfg,
               opts.traces ? &trace : nullptr);
    record_stage(state, stream, cfg);
    if (opts.traces) opts.traces->push_back(std::move(trace));
    if (opts.checkpoint_path) save_checkpoint(*opts.checkpoint_path, state, config_text);
  }

  RunResult out;
  out.complete = state.tasks_completed == stream.tasks.size();
  out.accuracy = state.accuracy;
  if (!out.accuracy.stage_acc.empty()) out.report = summarize(out.accuracy, cfg.seed);
  out.report.total_steps = state.global_step;
  out.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  out.state = std::move(state);
  return out;
}

RunResult run_sequence(const DomainStream& stream, const TrainConfig& cfg, RunOptions opts) {
  return resume_sequence(stream, cfg, initial_state(cfg, stream.feature_dim, stream.num_classes),
                         std::move(opts));
}

}  // namespace driftfuse
