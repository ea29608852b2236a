#include <algorithm>
#include <cmath>
#include <numeric>
#include <cstdio>
#include <random>
#include <string>

#include "driftfuse/data.hpp"
#include "driftfuse/errors.hpp"
#include "driftfuse/nn.hpp"
#include "driftfuse/synthetic_latents.hpp"

namespace driftfuse {

void validate(const SyntheticConfig& cfg) {
  if (cfg.num_domains < 1 || cfg.classes < 1 || cfg.feature_dim < 1 ||
      cfg.samples_per_domain < 1 || cfg.intrinsic_rank < 1 || cfg.nuisance_rank < 1) {
    throw ConfigError("synthetic: all counts must be >= 1");
  }
  if (cfg.num_domains + cfg.unseen_domains > 65535) {
    throw ConfigError("synthetic: domain ids must fit in 16 bits");
  }
  if (!(cfg.bias_ratio >= 0.0 && cfg.bias_ratio <= 1.0)) {
    throw ConfigError("synthetic: bias_ratio must lie in [0, 1]");
  }
  if (cfg.noise_scale < 0.0 || cfg.style_scale < 0.0 || cfg.bias_scale < 0.0 ||
      cfg.class_separation < 0.0) {
    throw ConfigError("synthetic: scales must be non-negative");
  }
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0)) {
    throw ConfigError("synthetic: test_fraction must lie in (0, 1)");
  }
}

namespace {

Matrix gaussian(std::size_t rows, std::size_t cols, double scale, Rng& rng) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = n(rng);
  return m;
}

}  // namespace

std::vector<FeatureBatch> generate_domain_pools(const SyntheticConfig& cfg,
                                                std::vector<Matrix>* nuisance_latents) {
  validate(cfg);
  Rng rng(cfg.seed);
  const std::size_t total = cfg.num_domains + cfg.unseen_domains;
  const std::size_t ki = cfg.intrinsic_rank;
  const std::size_t kn = cfg.nuisance_rank;

  // Fixed mixing maps from the two latent spaces into feature space.
  const Matrix mix_intrinsic = gaussian(cfg.feature_dim, ki, 1.0 / std::sqrt(double(ki)), rng);
  const Matrix mix_nuisance = gaussian(cfg.feature_dim, kn, 1.0 / std::sqrt(double(kn)), rng);
  // Class prototypes shared by every domain.
  const Matrix prototypes = gaussian(cfg.classes, ki, cfg.class_separation, rng);

  // Per-domain style offset and class signatures (cues) in the nuisance space.
  std::vector<Matrix> styles;
  std::vector<Matrix> signatures;
  const Matrix shared = gaussian(cfg.classes, kn, cfg.bias_scale / std::sqrt(double(kn)), rng);
  for (std::size_t t = 0; t < total; ++t) {
    styles.push_back(gaussian(1, kn, cfg.style_scale, rng));
    if (cfg.cues == CueMode::fixed) {
      signatures.push_back(shared);
    } else if (cfg.cues == CueMode::permuted) {
      std::vector<std::size_t> perm(cfg.classes);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::shuffle(perm.begin(), perm.end(), rng);
      Matrix sig(cfg.classes, kn);
      for (std::size_t c = 0; c < cfg.classes; ++c) {
        std::copy(shared.row(perm[c]).begin(), shared.row(perm[c]).end(), sig.row(c).begin());
      }
      signatures.push_back(std::move(sig));
    } else {
      signatures.push_back(gaussian(cfg.classes, kn, cfg.bias_scale / std::sqrt(double(kn)), rng));
    }
  }

  std::vector<FeatureBatch> pools;
  if (nuisance_latents) nuisance_latents->clear();
  std::uniform_int_distribution<std::uint32_t> pick_class(0,
                                                          static_cast<std::uint32_t>(cfg.classes - 1));
  std::bernoulli_distribution aligned(cfg.bias_ratio);
  std::normal_distribution<double> noise(0.0, cfg.noise_scale);

  for (std::size_t t = 0; t < total; ++t) {
    const std::size_t n = cfg.samples_per_domain;
    Matrix features(n, cfg.feature_dim);
    Matrix nuisance(n, kn);
    std::vector<std::uint32_t> labels(n);
    std::vector<std::uint16_t> domains(n, static_cast<std::uint16_t>(t));
    std::vector<double> zi(ki);
    std::vector<double> zn(kn);

    for (std::size_t s = 0; s < n; ++s) {
      const std::uint32_t y = pick_class(rng);
      // Bias-aligned samples carry their own class's cue. The rest carry no
      // cue (fixed) or the cue of a class drawn independently of the label.
      const bool is_aligned = aligned(rng);
      const std::uint32_t cue = is_aligned ? y : pick_class(rng);
      const bool has_cue = is_aligned || cfg.cues != CueMode::fixed;
      labels[s] = y;
      for (std::size_t k = 0; k < ki; ++k) zi[k] = prototypes(y, k) + noise(rng);
      for (std::size_t k = 0; k < kn; ++k) {
        zn[k] = styles[t](0, k) + (has_cue ? signatures[t](cue, k) : 0.0) + noise(rng);
        nuisance(s, k) = zn[k];
      }
      auto row = features.row(s);
      for (std::size_t r = 0; r < cfg.feature_dim; ++r) {
        double v = 0.0;
        for (std::size_t k = 0; k < ki; ++k) v += mix_intrinsic(r, k) * zi[k];
        for (std::size_t k = 0; k < kn; ++k) v += mix_nuisance(r, k) * zn[k];
        row[r] = static_cast<double>(static_cast<float>(v));
      }
    }
    pools.emplace_back(std::move(features), std::move(labels), std::move(domains));
    if (nuisance_latents) nuisance_latents->push_back(std::move(nuisance));
  }
  return pools;
}

std::vector<FeatureBatch> generate_domain_pools(const SyntheticConfig& cfg) {
  return generate_domain_pools(cfg, nullptr);
}

std::vector<std::string> synthetic_domain_names(const SyntheticConfig& cfg) {
  std::vector<std::string> names;
  char buf[32];
  for (std::size_t t = 0; t < cfg.num_domains; ++t) {
    std::snprintf(buf, sizeof buf, "domain_%02zu", t);
    names.emplace_back(buf);
  }
  for (std::size_t u = 0; u < cfg.unseen_domains; ++u) {
    std::snprintf(buf, sizeof buf, "unseen_%02zu", u);
    names.emplace_back(buf);
  }
  return names;
}

DomainStream generate_synthetic(const SyntheticConfig& cfg) {
  StreamLayout layout{cfg.unseen_domains, cfg.test_fraction, cfg.split_seed};
  return assemble_stream(generate_domain_pools(cfg), synthetic_domain_names(cfg), cfg.classes,
                         layout);
}

}  // namespace driftfuse
