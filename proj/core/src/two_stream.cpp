#include "driftfuse/two_stream.hpp"

#include <algorithm>
#include <string>

#include "driftfuse/errors.hpp"

namespace driftfuse {

TwoStreamModel make_two_stream(const ModelShape& shape, Rng& rng) {
  if (shape.encoder_layers < 1) throw ShapeError("make_two_stream: need at least one layer");
  if (shape.feature_dim == 0 || shape.latent_dim == 0 || shape.num_classes == 0 ||
      shape.hidden_width == 0) {
    throw ShapeError("make_two_stream: all widths must be positive");
  }
  std::vector<std::size_t> widths{shape.feature_dim};
  for (std::size_t i = 1; i < shape.encoder_layers; ++i) widths.push_back(shape.hidden_width);
  widths.push_back(shape.latent_dim);

  TwoStreamModel m;
  m.intrinsic_encoder = make_mlp(widths, shape.dropout, rng);
  m.domain_encoder = make_mlp(widths, shape.dropout, rng);
  m.intrinsic_classifier = make_dense(2 * shape.latent_dim, shape.num_classes, rng);
  m.domain_classifier = make_dense(2 * shape.latent_dim, shape.num_classes, rng);
  return m;
}

void validate(const TwoStreamModel& model) {
  if (model.intrinsic_encoder.layers.empty() || model.domain_encoder.layers.empty()) {
    throw ShapeError("two-stream model: empty encoder");
  }
  const std::size_t d = model.intrinsic_encoder.out_width();
  if (model.domain_encoder.out_width() != d) {
    throw ShapeError("two-stream model: encoders disagree on latent width");
  }
  if (model.domain_encoder.in_width() != model.intrinsic_encoder.in_width()) {
    throw ShapeError("two-stream model: encoders disagree on input width");
  }
  if (model.intrinsic_classifier.in_width() != 2 * d ||
      model.domain_classifier.in_width() != 2 * d) {
    throw ShapeError("two-stream model: classifiers must read 2 * latent width");
  }
  if (model.intrinsic_classifier.out_width() != model.domain_classifier.out_width()) {
    throw ShapeError("two-stream model: classifiers disagree on class count");
  }
}

TwoStreamGradients zero_gradients(const TwoStreamModel& model) {
  return {zero_gradients(model.intrinsic_encoder), zero_gradients(model.domain_encoder),
          zeros_like(model.intrinsic_classifier), zeros_like(model.domain_classifier)};
}

void collect_views(TwoStreamModel& model, std::vector<std::span<double>>& out) {
  collect_views(model.intrinsic_encoder, out);
  collect_views(model.domain_encoder, out);
  collect_views(model.intrinsic_classifier, out);
  collect_views(model.domain_classifier, out);
}

void collect_views(const TwoStreamGradients& grads, std::vector<std::span<const double>>& out) {
  collect_views(grads.intrinsic_encoder, out);
  collect_views(grads.domain_encoder, out);
  collect_views(grads.intrinsic_classifier, out);
  collect_views(grads.domain_classifier, out);
}

EncodedBatch encode(const TwoStreamModel& model, const Matrix& h, Mode mode, Rng* rng) {
  EncodedBatch enc;
  enc.intrinsic = mlp_forward(model.intrinsic_encoder, h, mode, rng, &enc.intrinsic_cache);
  enc.domain = mlp_forward(model.domain_encoder, h, mode, rng, &enc.domain_cache);
  return enc;
}

EncodedBatch encode(const TwoStreamModel& model, const Matrix& h,
                    std::span<const std::uint32_t> labels, Mode mode, Rng* rng) {
  if (labels.size() != h.rows()) throw ShapeError("encode: label count does not match batch");
  EncodedBatch enc = encode(model, h, mode, rng);
  enc.labels.assign(labels.begin(), labels.end());
  return enc;
}

BlockedLogits classify_blocked(const TwoStreamModel& model, const EncodedBatch& enc) {
  BlockedLogits out;
  out.joint = hconcat(enc.intrinsic, enc.domain);
  out.intrinsic = dense_forward(model.intrinsic_classifier, out.joint);
  out.domain = dense_forward(model.domain_classifier, out.joint);
  return out;
}

std::vector<double> difficulty_weight(std::span<const double> ce_d, std::span<const double> ce_i) {
  if (ce_d.size() != ce_i.size()) throw ShapeError("difficulty_weight: length mismatch");
  std::vector<double> s(ce_d.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (ce_d[k] < 0.0 || ce_i[k] < 0.0) {
      throw ShapeError("difficulty_weight: losses must be non-negative");
    }
    const double denom = ce_i[k] + ce_d[k];
    s[k] = denom < kDifficultyEpsilon ? 0.5 : ce_d[k] / denom;
  }
  return s;
}

void HeadGradients::add_scaled(const HeadGradients& other, double scale) {
  auto axpy = [scale](std::span<double> dst, std::span<const double> src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
  };
  axpy(intrinsic_classifier.weight.values(), other.intrinsic_classifier.weight.values());
  axpy(intrinsic_classifier.bias, other.intrinsic_classifier.bias);
  axpy(domain_classifier.weight.values(), other.domain_classifier.weight.values());
  axpy(domain_classifier.bias, other.domain_classifier.bias);
  axpy(d_intrinsic.values(), other.d_intrinsic.values());
  axpy(d_domain.values(), other.d_domain.values());
}

namespace {

HeadGradients empty_head_gradients(const TwoStreamModel& model, const EncodedBatch& enc) {
  return {zeros_like(model.intrinsic_classifier), zeros_like(model.domain_classifier),
          Matrix(enc.size(), enc.intrinsic.cols()), Matrix(enc.size(), enc.domain.cols())};
}

void require_labels(const EncodedBatch& enc) {
  if (enc.labels.size() != enc.size() || enc.domain.rows() != enc.size()) {
    throw ShapeError("encoded batch: row counts disagree");
  }
}

// Scales row k of `grad` by w[k].
void scale_rows(Matrix& grad, std::span<const double> w) {
  for (std::size_t r = 0; r < grad.rows(); ++r)
    for (double& v : grad.row(r)) v *= w[r];
}

// Differentiates one head over its concatenated input and writes the chosen
// half (0 = intrinsic, 1 = domain, other = none) of dL/dinput into `into`.
void head_backward(const DenseLayer& head, const Matrix& joint, const Matrix& grad_logits,
                   DenseLayer& head_grad, Matrix* into, std::size_t half) {
  Matrix d_joint = dense_backward(head, joint, grad_logits, head_grad, into != nullptr);
  if (into == nullptr) return;
  const std::size_t d = into->cols();
  for (std::size_t r = 0; r < into->rows(); ++r) {
    auto src = d_joint.row(r).subspan(half * d, d);
    auto dst = into->row(r);
    for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
  }
}

bool has(LossTerms set, LossTerms t) {
  return (static_cast<unsigned>(set) & static_cast<unsigned>(t)) != 0;
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::vector<double> unswapped_difficulty(const EncodedBatch& enc, const BlockedLogits& logits) {
  const LossResult ce_i = softmax_ce(logits.intrinsic, enc.labels);
  const LossResult ce_d = softmax_ce(logits.domain, enc.labels);
  return difficulty_weight(ce_d.loss.per_sample, ce_i.loss.per_sample);
}

}  // namespace

ObjectiveResult disentangle_loss(const TwoStreamModel& model, const EncodedBatch& enc, double q,
                                 LossTerms terms) {
  require_labels(enc);
  const BlockedLogits logits = classify_blocked(model, enc);

  LossResult ce_i = softmax_ce(logits.intrinsic, enc.labels);
  const LossResult ce_d = softmax_ce(logits.domain, enc.labels);
  LossResult gce_d = gce_loss(logits.domain, enc.labels, q);

  ObjectiveResult out;
  out.difficulty = difficulty_weight(ce_d.loss.per_sample, ce_i.loss.per_sample);
  std::vector<double> weighted(enc.size());
  for (std::size_t k = 0; k < weighted.size(); ++k) {
    weighted[k] = out.difficulty[k] * ce_i.loss.per_sample[k];
  }
  out.intrinsic_term = mean(weighted);
  out.domain_term = gce_d.loss.value;
  out.value = out.intrinsic_term + out.domain_term;

  out.grads = empty_head_gradients(model, enc);
  if (has(terms, LossTerms::intrinsic)) {
    scale_rows(ce_i.grad, out.difficulty);
    head_backward(model.intrinsic_classifier, logits.joint, ce_i.grad,
                  out.grads.intrinsic_classifier, &out.grads.d_intrinsic, 0);
  }
  if (has(terms, LossTerms::domain)) {
    head_backward(model.domain_classifier, logits.joint, gce_d.grad,
                  out.grads.domain_classifier, &out.grads.d_domain, 1);
  }
  return out;
}

std::optional<SwapPairing> swap_features(const EncodedBatch& enc,
                                         const DomainFeatureReservoir& reservoir, Rng& rng) {
  const std::size_t n = enc.size();
  if (n == 0) return std::nullopt;
  SwapPairing p;
  p.partner_index.resize(n);
  p.donor_label.resize(n);
  p.donor_domain_feature = Matrix(n, enc.domain.cols());

  if (!reservoir.empty()) {
    if (reservoir.feature_dim() != enc.domain.cols()) {
      throw ShapeError("swap_features: reservoir width does not match latent width");
    }
    p.from_reservoir = true;
    std::uniform_int_distribution<std::size_t> pick(0, reservoir.size() - 1);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t j = pick(rng);
      p.partner_index[k] = j;
      p.donor_label[k] = reservoir.label(j);
      auto src = reservoir.feature(j);
      std::copy(src.begin(), src.end(), p.donor_domain_feature.row(k).begin());
    }
    return p;
  }

  if (n < 2) return std::nullopt;
  require_labels(enc);
  std::uniform_int_distribution<std::size_t> pick(0, n - 2);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t j = pick(rng);
    if (j >= k) ++j;  // uniform over rows other than k
    p.partner_index[k] = j;
    p.donor_label[k] = enc.labels[j];
    auto src = enc.domain.row(j);
    std::copy(src.begin(), src.end(), p.donor_domain_feature.row(k).begin());
  }
  return p;
}

ObjectiveResult swap_loss(const TwoStreamModel& model, const EncodedBatch& enc,
                          const SwapPairing& pairing, double q, LossTerms terms) {
  require_labels(enc);
  if (pairing.donor_domain_feature.rows() != enc.size() ||
      pairing.donor_label.size() != enc.size()) {
    throw ShapeError("swap_loss: pairing does not cover the batch");
  }
  const BlockedLogits plain = classify_blocked(model, enc);

  ObjectiveResult out;
  out.difficulty = unswapped_difficulty(enc, plain);

  const Matrix joint = hconcat(enc.intrinsic, pairing.donor_domain_feature);
  LossResult ce_i = softmax_ce(dense_forward(model.intrinsic_classifier, joint), enc.labels);
  LossResult gce_d =
      gce_loss(dense_forward(model.domain_classifier, joint), pairing.donor_label, q);

  std::vector<double> weighted(enc.size());
  for (std::size_t k = 0; k < weighted.size(); ++k) {
    weighted[k] = out.difficulty[k] * ce_i.loss.per_sample[k];
  }
  out.intrinsic_term = mean(weighted);
  out.domain_term = gce_d.loss.value;
  out.value = out.intrinsic_term + out.domain_term;

  out.grads = empty_head_gradients(model, enc);
  if (has(terms, LossTerms::intrinsic)) {
    scale_rows(ce_i.grad, out.difficulty);
    head_backward(model.intrinsic_classifier, joint, ce_i.grad, out.grads.intrinsic_classifier,
                  &out.grads.d_intrinsic, 0);
  }
  if (has(terms, LossTerms::domain)) {
    // x_i is blocked for C_d and x~_d is a constant: only the head learns.
    head_backward(model.domain_classifier, joint, gce_d.grad, out.grads.domain_classifier,
                  nullptr, 1);
  }
  return out;
}

ObjectiveResult joint_ce_loss(const TwoStreamModel& model, const EncodedBatch& enc) {
  require_labels(enc);
  const Matrix joint = hconcat(enc.intrinsic, enc.domain);
  const LossResult ce = softmax_ce(dense_forward(model.intrinsic_classifier, joint), enc.labels);

  ObjectiveResult out;
  out.value = out.intrinsic_term = ce.loss.value;
  out.grads = empty_head_gradients(model, enc);
  Matrix d_joint = dense_backward(model.intrinsic_classifier, joint, ce.grad,
                                  out.grads.intrinsic_classifier, true);
  out.grads.d_intrinsic = column_block(d_joint, 0, enc.intrinsic.cols());
  out.grads.d_domain = column_block(d_joint, enc.intrinsic.cols(), enc.domain.cols());
  return out;
}

ObjectiveResult joint_swap_ce_loss(const TwoStreamModel& model, const EncodedBatch& enc,
                                   const SwapPairing& pairing) {
  require_labels(enc);
  const Matrix joint = hconcat(enc.intrinsic, pairing.donor_domain_feature);
  const LossResult ce = softmax_ce(dense_forward(model.intrinsic_classifier, joint), enc.labels);

  ObjectiveResult out;
  out.value = out.intrinsic_term = ce.loss.value;
  out.grads = empty_head_gradients(model, enc);
  head_backward(model.intrinsic_classifier, joint, ce.grad, out.grads.intrinsic_classifier,
                &out.grads.d_intrinsic, 0);
  return out;
}

TwoStreamGradients backpropagate(const TwoStreamModel& model, const EncodedBatch& enc,
                                 const HeadGradients& head) {
  TwoStreamGradients g = zero_gradients(model);
  g.intrinsic_classifier = head.intrinsic_classifier;
  g.domain_classifier = head.domain_classifier;
  mlp_backward(model.intrinsic_encoder, enc.intrinsic_cache, head.d_intrinsic,
               g.intrinsic_encoder);
  mlp_backward(model.domain_encoder, enc.domain_cache, head.d_domain, g.domain_encoder);
  return g;
}

double total_loss(double l_dis, double l_sp, double lambda, bool swap_active) {
  if (lambda < 0.0) throw ShapeError("total_loss: lambda must be non-negative");
  return swap_active ? l_dis + lambda * l_sp : l_dis;
}

void reservoir_update(DomainFeatureReservoir& reservoir, const EncodedBatch& enc, Rng& rng) {
  reservoir.offer(enc.domain, enc.labels, rng);
}

std::vector<std::uint32_t> predict(const TwoStreamModel& model, const Matrix& h) {
  const EncodedBatch enc = encode(model, h, Mode::eval, nullptr);
  const Matrix logits = dense_forward(model.intrinsic_classifier, hconcat(enc.intrinsic, enc.domain));
  std::vector<std::uint32_t> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    out[r] = static_cast<std::uint32_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace driftfuse
