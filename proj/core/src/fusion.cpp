#include "driftfuse/fusion.hpp"

#include <cmath>
#include <string>

#include "driftfuse/errors.hpp"

namespace driftfuse {

void validate(const FusionConfig& cfg) {
  if (!(cfg.beta >= 0.0 && cfg.beta <= 1.0)) {
    throw ConfigError("fusion.beta must lie in [0, 1]");
  }
  if (cfg.forced_mask && !(*cfg.forced_mask >= 0.0 && *cfg.forced_mask <= 1.0)) {
    throw ConfigError("fusion.forced_mask must lie in [0, 1]");
  }
}

namespace {

Matrix bias_column(const std::vector<double>& b) {
  return Matrix(b.size(), 1, b);
}

}  // namespace

LayerStructure capture_layer(const Matrix& w) {
  QrFactors f = qr_decompose(w);
  return {std::move(f.q), std::move(f.r), w};
}

FusionSnapshot capture_structure(const MlpParams& intrinsic_encoder, std::size_t task,
                                 bool include_biases) {
  FusionSnapshot s;
  s.captured_task = task;
  for (const auto& layer : intrinsic_encoder.layers) {
    s.layers.push_back(capture_layer(layer.weight));
    if (include_biases) s.bias_layers.push_back(capture_layer(bias_column(layer.bias)));
  }
  return s;
}

Matrix fusion_mask(const LayerStructure& structure, const Matrix& w_init, const FusionConfig& cfg) {
  const Matrix& q = structure.q;
  const Matrix& r = structure.r;
  if (q.rows() != w_init.rows() || q.cols() != w_init.rows() || !r.same_shape(w_init) ||
      !structure.weight.same_shape(w_init)) {
    throw ShapeError("fusion_mask: snapshot " + std::to_string(r.rows()) + "x" +
                     std::to_string(r.cols()) + " does not match init " +
                     std::to_string(w_init.rows()) + "x" + std::to_string(w_init.cols()));
  }
  if (!all_finite(w_init) || !all_finite(r) || !all_finite(q)) {
    throw ShapeError("fusion_mask: non-finite input");
  }

  const bool scalar = cfg.mask_mode == MaskMode::scalar;
  const double r_max = max_abs(r);
  if (r_max == 0.0) {
    return scalar ? Matrix(1, 1, 1.0) : Matrix(w_init.rows(), w_init.cols(), 1.0);
  }

  const Matrix discrepancy = matmul_tn(q, w_init - structure.weight);
  Matrix mask = frobenius_diff(discrepancy, Matrix(r.rows(), r.cols()),
                               scalar ? DiffMode::scalar : DiffMode::elementwise);
  for (double& v : mask.values()) v = clamp01(v / r_max + cfg.beta);
  return mask;
}

Matrix fuse_weights(const Matrix& w_prev, const Matrix& w_init, const Matrix& mask) {
  if (!w_prev.same_shape(w_init)) throw ShapeError("fuse_weights: W_prev/W_init shape mismatch");
  const bool broadcast = mask.rows() == 1 && mask.cols() == 1;
  if (!broadcast && !mask.same_shape(w_prev)) throw ShapeError("fuse_weights: mask shape mismatch");

  Matrix out(w_prev.rows(), w_prev.cols());
  auto prev = w_prev.values();
  auto init = w_init.values();
  auto m = mask.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const double mi = broadcast ? m[0] : m[i];
    // Equivalent to (1 - m) prev + m init, arranged so M = 0, M = 1 and
    // prev == init all reproduce their operand exactly.
    dst[i] = mi == 1.0 ? init[i] : prev[i] + mi * (init[i] - prev[i]);
  }
  return out;
}

TwoStreamModel fuse_encoder(const TwoStreamModel& prev, const FusionSnapshot& snapshot,
                            std::span<const Matrix> init_weights, const FusionConfig& cfg) {
  validate(cfg);
  const auto& layers = prev.intrinsic_encoder.layers;
  if (snapshot.layers.size() != layers.size() || init_weights.size() != layers.size()) {
    throw ShapeError("fuse_encoder: snapshot/init layer count does not match the encoder");
  }
  if (cfg.fuse_biases && snapshot.bias_layers.size() != layers.size()) {
    throw ShapeError("fuse_encoder: bias fusion requested but snapshot has no bias structure");
  }

  TwoStreamModel next = prev;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Matrix mask = cfg.forced_mask
                            ? Matrix(1, 1, *cfg.forced_mask)
                            : fusion_mask(snapshot.layers[l], init_weights[l], cfg);
    next.intrinsic_encoder.layers[l].weight =
        fuse_weights(layers[l].weight, init_weights[l], mask);

    if (cfg.fuse_biases) {
      const Matrix b_prev = bias_column(layers[l].bias);
      const Matrix b_init = cfg.init == InitSource::previous ? b_prev : Matrix(b_prev.rows(), 1);
      const Matrix b_mask = cfg.forced_mask ? Matrix(1, 1, *cfg.forced_mask)
                                            : fusion_mask(snapshot.bias_layers[l], b_init, cfg);
      const Matrix fused = fuse_weights(b_prev, b_init, b_mask);
      auto v = fused.values();
      next.intrinsic_encoder.layers[l].bias.assign(v.begin(), v.end());
    }
  }
  return next;
}

TwoStreamModel fuse_encoder(const TwoStreamModel& prev, const FusionSnapshot& snapshot, Rng& rng,
                            const FusionConfig& cfg) {
  std::vector<Matrix> init;
  for (const auto& layer : prev.intrinsic_encoder.layers) {
    if (cfg.init == InitSource::previous) {
      init.push_back(layer.weight);
    } else {
      init.push_back(kaiming_uniform(layer.out_width(), layer.in_width(), rng));
    }
  }
  return fuse_encoder(prev, snapshot, init, cfg);
}

}  // namespace driftfuse
