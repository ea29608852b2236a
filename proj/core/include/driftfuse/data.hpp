#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "driftfuse/matrix.hpp"

namespace driftfuse {

/// Backbone feature vectors with class labels and (training-time) domain ids.
class FeatureBatch {
 public:
  FeatureBatch() = default;
  explicit FeatureBatch(std::size_t feature_dim) : features_(0, feature_dim) {}
  FeatureBatch(Matrix features, std::vector<std::uint32_t> labels,
               std::vector<std::uint16_t> domain_ids);

  const Matrix& features() const noexcept { return features_; }
  std::span<const std::uint32_t> labels() const noexcept { return labels_; }
  std::span<const std::uint16_t> domain_ids() const noexcept { return domain_ids_; }

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  std::size_t feature_dim() const noexcept { return features_.cols(); }

  /// Rows `indices` in order.
  FeatureBatch select(std::span<const std::size_t> indices) const;

  friend bool operator==(const FeatureBatch&, const FeatureBatch&) = default;

 private:
  Matrix features_;
  std::vector<std::uint32_t> labels_;
  std::vector<std::uint16_t> domain_ids_;
};

/// Appends b's rows to a; feature widths must agree.
FeatureBatch concat(const FeatureBatch& a, const FeatureBatch& b);

/// Anything evaluation can read: features and labels, nothing else.
template <typename T>
concept LabeledFeatures = requires(const T& s) {
  { s.features() } -> std::convertible_to<const Matrix&>;
  { s.labels() } -> std::convertible_to<std::span<const std::uint32_t>>;
};

struct DomainSplit {
  std::string name;
  FeatureBatch train;
  FeatureBatch test;
};

/// Domain-incremental stream: ordered training domains plus held-out domains
/// that are only ever evaluated. All domains share one class set.
struct DomainStream {
  std::vector<DomainSplit> tasks;
  std::vector<DomainSplit> unseen;
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;

  std::size_t total_domains() const noexcept { return tasks.size() + unseen.size(); }
  const DomainSplit& domain(std::size_t i) const {
    return i < tasks.size() ? tasks[i] : unseen[i - tasks.size()];
  }
};

struct StreamLayout {
  std::size_t unseen_domains = 2;
  double test_fraction = 0.2;
  std::uint64_t split_seed = 0;
};

/// Splits one pool per domain into train/test (a seeded permutation per
/// domain) and assigns the last `layout.unseen_domains` pools to the unseen
/// set, whose records are all test data.
DomainStream assemble_stream(std::vector<FeatureBatch> pools, std::vector<std::string> names,
                             std::size_t num_classes, const StreamLayout& layout);

/// How the spurious cue vectors relate to classes across domains.
enum class CueMode {
  fixed,        // one cue per class in every domain; unaligned samples carry none
  permuted,     // one cue set, assigned to classes by a per-domain permutation
  independent,  // fresh cue per (domain, class); unaligned samples carry a random class's cue
};

struct SyntheticConfig {
  std::size_t num_domains = 5;
  std::size_t unseen_domains = 2;
  std::size_t classes = 10;
  std::size_t feature_dim = 64;
  std::size_t samples_per_domain = 2000;
  double bias_ratio = 0.95;
  std::size_t intrinsic_rank = 32;  // width of the class-signal latent
  std::size_t nuisance_rank = 16;   // width of the style/bias latent
  double class_separation = 0.5;
  double noise_scale = 1.0;
  double style_scale = 1.0;
  double bias_scale = 6.0;
  CueMode cues = CueMode::permuted;
  double test_fraction = 0.2;
  std::uint64_t split_seed = 0;
  std::uint64_t seed = 0;
};

void validate(const SyntheticConfig& cfg);

/// Raw per-domain pools (T training domains then U unseen ones), labelled
/// with their domain index. Features are rounded to float precision so that
/// they survive the on-disk f32 format bit-exactly.
std::vector<FeatureBatch> generate_domain_pools(const SyntheticConfig& cfg);

std::vector<std::string> synthetic_domain_names(const SyntheticConfig& cfg);

DomainStream generate_synthetic(const SyntheticConfig& cfg);

}  // namespace driftfuse
