#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "driftfuse/matrix.hpp"
#include "driftfuse/nn.hpp"
#include "driftfuse/reservoir.hpp"

namespace driftfuse {

struct ModelShape {
  std::size_t feature_dim = 64;
  std::size_t hidden_width = 64;
  std::size_t latent_dim = 32;
  std::size_t num_classes = 10;
  std::size_t encoder_layers = 3;
  double dropout = 0.1;
};

/// Intrinsic/domain encoder pair with one linear head per stream. Both heads
/// read the concatenation [x_i; x_d] of the two latent codes.
struct TwoStreamModel {
  MlpParams intrinsic_encoder;
  MlpParams domain_encoder;
  DenseLayer intrinsic_classifier;
  DenseLayer domain_classifier;

  std::size_t feature_dim() const { return intrinsic_encoder.in_width(); }
  std::size_t latent_dim() const { return intrinsic_encoder.out_width(); }
  std::size_t num_classes() const { return intrinsic_classifier.out_width(); }

  friend bool operator==(const TwoStreamModel&, const TwoStreamModel&) = default;
};

TwoStreamModel make_two_stream(const ModelShape& shape, Rng& rng);

/// Throws ShapeError when the stream widths are inconsistent.
void validate(const TwoStreamModel& model);

struct TwoStreamGradients {
  MlpGradients intrinsic_encoder;
  MlpGradients domain_encoder;
  DenseLayer intrinsic_classifier;
  DenseLayer domain_classifier;
};

TwoStreamGradients zero_gradients(const TwoStreamModel& model);
void collect_views(TwoStreamModel& model, std::vector<std::span<double>>& out);
void collect_views(const TwoStreamGradients& grads, std::vector<std::span<const double>>& out);

struct EncodedBatch {
  Matrix intrinsic;  // x_i, batch x d
  Matrix domain;     // x_d, batch x d
  std::vector<std::uint32_t> labels;
  std::vector<std::uint16_t> domain_ids;  // bookkeeping only, never read by the heads

  MlpCache intrinsic_cache;
  MlpCache domain_cache;

  std::size_t size() const noexcept { return intrinsic.rows(); }
};

/// x_i = E_i(h), x_d = E_d(h). Labels are attached by the caller.
EncodedBatch encode(const TwoStreamModel& model, const Matrix& h, Mode mode, Rng* rng);
EncodedBatch encode(const TwoStreamModel& model, const Matrix& h,
                    std::span<const std::uint32_t> labels, Mode mode, Rng* rng);

struct BlockedLogits {
  Matrix joint;      // [x_i; x_d]
  Matrix intrinsic;  // C_i(joint)
  Matrix domain;     // C_d(joint)
};

/// Forward pass of both heads. In every loss below, gradients of the C_i
/// term reach E_i only and gradients of the C_d term reach E_d only.
BlockedLogits classify_blocked(const TwoStreamModel& model, const EncodedBatch& enc);

/// S = ce_d / (ce_i + ce_d), or 0.5 when both vanish.
std::vector<double> difficulty_weight(std::span<const double> ce_d, std::span<const double> ce_i);

inline constexpr double kDifficultyEpsilon = 1e-12;

/// Gradients of a head objective: classifier parameters plus the signal to
/// route back into each encoder.
struct HeadGradients {
  DenseLayer intrinsic_classifier;
  DenseLayer domain_classifier;
  Matrix d_intrinsic;  // into E_i
  Matrix d_domain;     // into E_d

  void add_scaled(const HeadGradients& other, double scale);
};

enum class LossTerms : unsigned { intrinsic = 1, domain = 2, all = 3 };

struct ObjectiveResult {
  double value = 0.0;
  double intrinsic_term = 0.0;       // mean S * CE(C_i, y)
  double domain_term = 0.0;          // mean GCE(C_d, .)
  std::vector<double> difficulty;    // S per sample (detached)
  HeadGradients grads;
};

/// L_dis = mean[S * CE(C_i([x_i; x_d]), y) + GCE(C_d([x_i; x_d]), y)].
/// `terms` restricts the differentiated terms, the value always covers both.
ObjectiveResult disentangle_loss(const TwoStreamModel& model, const EncodedBatch& enc, double q,
                                 LossTerms terms = LossTerms::all);

struct SwapPairing {
  std::vector<std::size_t> partner_index;  // row in the donor pool
  Matrix donor_domain_feature;             // x~_d, batch x d
  std::vector<std::uint32_t> donor_label;  // y~
  bool from_reservoir = false;
};

/// Draws one donor per row: uniformly from `reservoir` when it holds entries,
/// else uniformly from the other rows of the batch. Returns nullopt when no
/// donor exists (empty reservoir and a single-row batch).
std::optional<SwapPairing> swap_features(const EncodedBatch& enc,
                                         const DomainFeatureReservoir& reservoir, Rng& rng);

/// L_sp = mean[S * CE(C_i([x_i; x~_d]), y) + GCE(C_d([x_i; x~_d]), y~)] with S
/// taken from the unswapped sample. Donor features are constants.
ObjectiveResult swap_loss(const TwoStreamModel& model, const EncodedBatch& enc,
                          const SwapPairing& pairing, double q, LossTerms terms = LossTerms::all);

/// Single-stream baseline: CE(C_i([x_i; x_d]), y) with gradients into both encoders.
ObjectiveResult joint_ce_loss(const TwoStreamModel& model, const EncodedBatch& enc);

/// Swap counterpart of joint_ce_loss: CE(C_i([x_i; x~_d]), y).
ObjectiveResult joint_swap_ce_loss(const TwoStreamModel& model, const EncodedBatch& enc,
                                   const SwapPairing& pairing);

/// Pushes head gradients through both encoders.
TwoStreamGradients backpropagate(const TwoStreamModel& model, const EncodedBatch& enc,
                                 const HeadGradients& head);

double total_loss(double l_dis, double l_sp, double lambda, bool swap_active);

void reservoir_update(DomainFeatureReservoir& reservoir, const EncodedBatch& enc, Rng& rng);

/// argmax of C_i([E_i(h); E_d(h)]) in eval mode.
std::vector<std::uint32_t> predict(const TwoStreamModel& model, const Matrix& h);

}  // namespace driftfuse
