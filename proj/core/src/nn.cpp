#include "driftfuse/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "driftfuse/errors.hpp"

namespace driftfuse {

DenseLayer zeros_like(const DenseLayer& layer) {
  return {Matrix(layer.weight.rows(), layer.weight.cols()),
          std::vector<double>(layer.bias.size(), 0.0)};
}

Matrix kaiming_uniform(std::size_t out, std::size_t in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix w(out, in);
  for (double& v : w.values()) v = dist(rng);
  return w;
}

DenseLayer make_dense(std::size_t in, std::size_t out, Rng& rng) {
  return {kaiming_uniform(out, in, rng), std::vector<double>(out, 0.0)};
}

Matrix dense_forward(const DenseLayer& layer, const Matrix& x) {
  if (x.cols() != layer.in_width()) {
    throw ShapeError("dense_forward: input width " + std::to_string(x.cols()) +
                     " != layer width " + std::to_string(layer.in_width()));
  }
  Matrix y = matmul_nt(x, layer.weight);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += layer.bias[c];
  }
  return y;
}

Matrix dense_backward(const DenseLayer& layer, const Matrix& x, const Matrix& grad_out,
                      DenseLayer& grad, bool want_input_grad) {
  grad.weight = grad.weight + matmul_tn(grad_out, x);
  for (std::size_t r = 0; r < grad_out.rows(); ++r) {
    auto row = grad_out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) grad.bias[c] += row[c];
  }
  if (!want_input_grad) return {};
  return matmul(grad_out, layer.weight);
}

MlpParams make_mlp(std::span<const std::size_t> widths, double dropout_rate, Rng& rng) {
  if (widths.size() < 2) throw ShapeError("make_mlp: need at least input and output widths");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw ShapeError("make_mlp: dropout rate must lie in [0, 1)");
  }
  MlpParams p;
  p.dropout_rate = dropout_rate;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    p.layers.push_back(make_dense(widths[i], widths[i + 1], rng));
  }
  return p;
}

MlpGradients zero_gradients(const MlpParams& params) {
  MlpGradients g;
  for (const auto& layer : params.layers) g.layers.push_back(zeros_like(layer));
  return g;
}

Matrix mlp_forward(const MlpParams& params, const Matrix& x, Mode mode, Rng* rng,
                   MlpCache* cache) {
  if (params.layers.empty()) throw ShapeError("mlp_forward: no layers");
  if (x.cols() != params.in_width()) {
    throw ShapeError("mlp_forward: input width " + std::to_string(x.cols()) +
                     " != encoder input width " + std::to_string(params.in_width()));
  }
  const bool dropout = mode == Mode::train && params.dropout_rate > 0.0;
  if (dropout && rng == nullptr) throw ShapeError("mlp_forward: train-mode dropout needs an rng");
  const double keep_scale = 1.0 / (1.0 - params.dropout_rate);

  if (cache) {
    cache->inputs.clear();
    cache->pre_activation.clear();
    cache->dropout_scale.clear();
  }

  Matrix h = x;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    Matrix z = dense_forward(params.layers[l], h);
    if (cache) cache->inputs.push_back(std::move(h));
    if (l + 1 == params.layers.size()) return z;

    Matrix a = z;
    if (params.activation == Activation::relu) {
      for (double& v : a.values()) v = v > 0.0 ? v : 0.0;
    }
    if (dropout) {
      std::bernoulli_distribution keep(1.0 - params.dropout_rate);
      Matrix scale(a.rows(), a.cols());
      auto sv = scale.values();
      auto av = a.values();
      for (std::size_t i = 0; i < sv.size(); ++i) {
        sv[i] = keep(*rng) ? keep_scale : 0.0;
        av[i] *= sv[i];
      }
      if (cache) cache->dropout_scale.push_back(std::move(scale));
    }
    if (cache) cache->pre_activation.push_back(std::move(z));
    h = std::move(a);
  }
  return h;  // unreachable
}

Matrix mlp_backward(const MlpParams& params, const MlpCache& cache, const Matrix& grad_out,
                    MlpGradients& grads, bool want_input_grad) {
  if (cache.inputs.size() != params.layers.size()) {
    throw ShapeError("mlp_backward: cache does not match parameters");
  }
  Matrix g = grad_out;
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const bool need_input = l > 0 || want_input_grad;
    g = dense_backward(params.layers[l], cache.inputs[l], g, grads.layers[l], need_input);
    if (l == 0) break;
    auto gv = g.values();
    if (!cache.dropout_scale.empty()) {
      auto sv = cache.dropout_scale[l - 1].values();
      for (std::size_t i = 0; i < gv.size(); ++i) gv[i] *= sv[i];
    }
    if (params.activation == Activation::relu) {
      auto zv = cache.pre_activation[l - 1].values();
      for (std::size_t i = 0; i < gv.size(); ++i) {
        if (zv[i] <= 0.0) gv[i] = 0.0;
      }
    }
  }
  return want_input_grad ? g : Matrix{};
}

Matrix softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto in = logits.row(r);
    auto out = p.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      out[c] = std::exp(in[c] - mx);
      sum += out[c];
    }
    for (double& v : out) v /= sum;
  }
  return p;
}

namespace {

void check_labels(const Matrix& logits, std::span<const std::uint32_t> labels, const char* op) {
  if (labels.size() != logits.rows()) {
    throw ShapeError(std::string(op) + ": label count " + std::to_string(labels.size()) +
                     " != batch " + std::to_string(logits.rows()));
  }
  for (auto y : labels) {
    if (y >= logits.cols()) {
      throw ShapeError(std::string(op) + ": label " + std::to_string(y) +
                       " out of range for " + std::to_string(logits.cols()) + " classes");
    }
  }
}

}  // namespace

LossResult softmax_ce(const Matrix& logits, std::span<const std::uint32_t> labels) {
  check_labels(logits, labels, "softmax_ce");
  const std::size_t n = logits.rows();
  LossResult res;
  res.probs = softmax(logits);
  res.grad = res.probs;
  res.loss.per_sample.resize(n);
  const double inv_n = n == 0 ? 0.0 : 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    auto z = logits.row(r);
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - mx);
    const double loss = std::log(sum) + mx - z[labels[r]];
    res.loss.per_sample[r] = loss;
    total += loss;

    auto g = res.grad.row(r);
    g[labels[r]] -= 1.0;
    for (double& v : g) v *= inv_n;
  }
  res.loss.value = total * inv_n;
  return res;
}

LossResult gce_loss(const Matrix& logits, std::span<const std::uint32_t> labels, double q) {
  if (!(q > 0.0 && q <= 1.0)) {
    throw ShapeError("gce_loss: q must lie in (0, 1], got " + std::to_string(q));
  }
  check_labels(logits, labels, "gce_loss");
  const std::size_t n = logits.rows();
  LossResult res;
  res.probs = softmax(logits);
  res.grad = res.probs;
  res.loss.per_sample.resize(n);
  const double inv_n = n == 0 ? 0.0 : 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double py = res.probs(r, labels[r]);
    const double pyq = std::pow(py, q);
    const double loss = (1.0 - pyq) / q;
    res.loss.per_sample[r] = loss;
    total += loss;

    // dL/dz = p_y^q (p - onehot)
    auto g = res.grad.row(r);
    g[labels[r]] -= 1.0;
    for (double& v : g) v *= pyq * inv_n;
  }
  res.loss.value = total * inv_n;
  return res;
}

double global_norm(std::span<const std::span<const double>> grads) {
  double s = 0.0;
  for (auto g : grads)
    for (double v : g) s += v * v;
  return std::sqrt(s);
}

void Optimizer::reset() {
  t_ = 0;
  m_.clear();
  v_.clear();
}

void Optimizer::step(std::span<const std::span<double>> params,
                     std::span<const std::span<const double>> grads) {
  if (params.size() != grads.size()) throw ShapeError("Optimizer::step: view count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size()) {
      throw ShapeError("Optimizer::step: parameter/gradient size mismatch at view " +
                       std::to_string(i));
    }
  }
  if (cfg_.kind == OptimizerKind::adam) {
    if (m_.empty()) {
      for (auto p : params) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
      }
    } else if (m_.size() != params.size()) {
      throw ShapeError("Optimizer::step: parameter layout changed between steps");
    }
  }

  double clip = 1.0;
  if (cfg_.clip_norm > 0.0) {
    const double norm = global_norm(grads);
    if (norm > cfg_.clip_norm) clip = cfg_.clip_norm / norm;
  }

  ++t_;
  const double lr = cfg_.learning_rate;
  if (cfg_.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params[i];
      auto g = grads[i];
      for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * clip * g[j];
    }
    return;
  }

  const double b1 = cfg_.beta1;
  const double b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i];
    auto g = grads[i];
    auto& m = m_[i];
    auto& v = v_[i];
    if (m.size() != p.size()) throw ShapeError("Optimizer::step: moment size mismatch");
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j] * clip;
      m[j] = b1 * m[j] + (1.0 - b1) * gj;
      v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }
}

void Optimizer::step(MlpParams& params, const MlpGradients& grads) {
  std::vector<std::span<double>> pv;
  std::vector<std::span<const double>> gv;
  collect_views(params, pv);
  collect_views(grads, gv);
  step(pv, gv);
}

void collect_views(DenseLayer& layer, std::vector<std::span<double>>& out) {
  out.emplace_back(layer.weight.values());
  out.emplace_back(layer.bias);
}

void collect_views(const DenseLayer& layer, std::vector<std::span<const double>>& out) {
  out.emplace_back(layer.weight.values());
  out.emplace_back(layer.bias);
}

void collect_views(MlpParams& params, std::vector<std::span<double>>& out) {
  for (auto& l : params.layers) collect_views(l, out);
}

void collect_views(const MlpGradients& grads, std::vector<std::span<const double>>& out) {
  for (const auto& l : grads.layers) collect_views(l, out);
}

}  // namespace driftfuse
