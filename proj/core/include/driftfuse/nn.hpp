#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "driftfuse/matrix.hpp"

namespace driftfuse {

using Rng = std::mt19937_64;

enum class Mode { train, eval };
enum class Activation { relu, identity };

/// Fully connected layer y = x Wᵀ + b, weight stored out x in.
struct DenseLayer {
  Matrix weight;
  std::vector<double> bias;

  std::size_t in_width() const noexcept { return weight.cols(); }
  std::size_t out_width() const noexcept { return weight.rows(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

DenseLayer zeros_like(const DenseLayer& layer);

/// Uniform fan-in initialization, bound sqrt(6 / fan_in).
Matrix kaiming_uniform(std::size_t out, std::size_t in, Rng& rng);
DenseLayer make_dense(std::size_t in, std::size_t out, Rng& rng);

Matrix dense_forward(const DenseLayer& layer, const Matrix& x);
/// Accumulates dW, db into `grad` and returns dL/dx (skipped when `want_input_grad` is false).
Matrix dense_backward(const DenseLayer& layer, const Matrix& x, const Matrix& grad_out,
                      DenseLayer& grad, bool want_input_grad = true);

/// Multi-layer perceptron. Hidden layers use `activation` followed by
/// inverted dropout; the final layer is linear.
struct MlpParams {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::relu;
  double dropout_rate = 0.1;

  std::size_t in_width() const { return layers.front().in_width(); }
  std::size_t out_width() const { return layers.back().out_width(); }

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

struct MlpGradients {
  std::vector<DenseLayer> layers;
};

MlpParams make_mlp(std::span<const std::size_t> widths, double dropout_rate, Rng& rng);
MlpGradients zero_gradients(const MlpParams& params);

/// Everything backprop needs from a forward pass.
struct MlpCache {
  std::vector<Matrix> inputs;          // input seen by each layer
  std::vector<Matrix> pre_activation;  // hidden layers only
  std::vector<Matrix> dropout_scale;   // hidden layers, empty when dropout inactive
};

/// `rng` is only consulted in train mode with a non-zero dropout rate.
Matrix mlp_forward(const MlpParams& params, const Matrix& x, Mode mode, Rng* rng,
                   MlpCache* cache = nullptr);

/// Accumulates into `grads`; returns dL/dx when requested.
Matrix mlp_backward(const MlpParams& params, const MlpCache& cache, const Matrix& grad_out,
                    MlpGradients& grads, bool want_input_grad = false);

struct LossValue {
  double value = 0.0;
  std::vector<double> per_sample;
};

struct LossResult {
  LossValue loss;
  Matrix probs;      // row-wise softmax of the logits
  Matrix grad;       // d mean-loss / d logits
};

Matrix softmax(const Matrix& logits);

/// Mean of -log softmax(logits)[label].
LossResult softmax_ce(const Matrix& logits, std::span<const std::uint32_t> labels);

/// Generalized cross entropy (1 - p_y^q) / q, q in (0, 1].
LossResult gce_loss(const Matrix& logits, std::span<const std::uint32_t> labels, double q);

// ---------------------------------------------------------------------------
// Optimizers operate on flat views so one instance can drive a whole model.

enum class OptimizerKind { adam, sgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;  // global-norm clipping, 0 disables
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) {}

  /// One update over paired parameter/gradient views. Moment buffers are
  /// sized on the first call; later calls must present the same layout.
  void step(std::span<const std::span<double>> params,
            std::span<const std::span<const double>> grads);

  void step(MlpParams& params, const MlpGradients& grads);

  void reset();
  const OptimizerConfig& config() const noexcept { return cfg_; }
  std::uint64_t steps_taken() const noexcept { return t_; }

 private:
  OptimizerConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

/// sqrt of the summed squares across all views.
double global_norm(std::span<const std::span<const double>> grads);

void collect_views(MlpParams& params, std::vector<std::span<double>>& out);
void collect_views(const MlpGradients& grads, std::vector<std::span<const double>>& out);
void collect_views(DenseLayer& layer, std::vector<std::span<double>>& out);
void collect_views(const DenseLayer& layer, std::vector<std::span<const double>>& out);

}  // namespace driftfuse
