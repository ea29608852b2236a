#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "driftfuse/matrix.hpp"
#include "driftfuse/nn.hpp"
#include "driftfuse/qr.hpp"
#include "driftfuse/two_stream.hpp"

namespace driftfuse {

enum class MaskMode { elementwise, scalar };

/// Where the fresh weights of a fused layer come from.
enum class InitSource {
  kaiming,   // uniform fan-in initialization from the fusion rng
  previous,  // W_init := W_prev (diagnostic: makes fusion a no-op when beta = 0)
};

struct FusionConfig {
  double beta = 0.1;
  MaskMode mask_mode = MaskMode::elementwise;
  bool fuse_biases = false;
  InitSource init = InitSource::kaiming;
  std::optional<double> forced_mask;  // overrides the computed mask when set
};

void validate(const FusionConfig& cfg);

/// QR structure of one captured weight matrix W = QR.
struct LayerStructure {
  Matrix q;
  Matrix r;
  Matrix weight;  // the captured W itself

  friend bool operator==(const LayerStructure&, const LayerStructure&) = default;
};

LayerStructure capture_layer(const Matrix& w);

struct FusionSnapshot {
  std::vector<LayerStructure> layers;       // one per intrinsic-encoder weight matrix
  std::vector<LayerStructure> bias_layers;  // only populated when biases are fused
  std::size_t captured_task = 0;

  friend bool operator==(const FusionSnapshot&, const FusionSnapshot&) = default;
};

/// QR structure of every weight matrix of the intrinsic encoder. With
/// `include_biases`, biases are captured as m x 1 columns as well.
FusionSnapshot capture_structure(const MlpParams& intrinsic_encoder, std::size_t task,
                                 bool include_biases = false);

/// M = clamp01(|QᵀW_init - R| / max|R| + beta), elementwise or with the
/// Frobenius norm of the whole difference in scalar mode (returned 1x1).
/// A zero R yields M = 1: nothing to preserve.
///
/// The discrepancy QᵀW_init - R is evaluated as Qᵀ(W_init - W), which is the
/// same quantity without the rounding of QᵀQR, so W_init == W gives M = beta
/// exactly.
Matrix fusion_mask(const LayerStructure& structure, const Matrix& w_init,
                   const FusionConfig& cfg);

/// (1 - M) ⊙ W_prev + M ⊙ W_init; a 1x1 mask broadcasts.
Matrix fuse_weights(const Matrix& w_prev, const Matrix& w_init, const Matrix& mask);

/// Fuses the intrinsic encoder with explicit fresh weights (one per layer).
/// Everything else in the model is copied unchanged.
TwoStreamModel fuse_encoder(const TwoStreamModel& prev, const FusionSnapshot& snapshot,
                            std::span<const Matrix> init_weights, const FusionConfig& cfg);

/// Draws fresh weights per `cfg.init` and fuses.
TwoStreamModel fuse_encoder(const TwoStreamModel& prev, const FusionSnapshot& snapshot, Rng& rng,
                            const FusionConfig& cfg);

}  // namespace driftfuse
