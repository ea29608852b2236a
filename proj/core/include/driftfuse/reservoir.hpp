#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "driftfuse/matrix.hpp"
#include "driftfuse/nn.hpp"

namespace driftfuse {

/// Bounded pool of domain-branch features (never raw inputs) from the most
/// recently completed task, filled by uniform reservoir sampling.
class DomainFeatureReservoir {
 public:
  explicit DomainFeatureReservoir(std::size_t capacity = 512) : capacity_(capacity) {}

  /// Drops every entry and starts collecting for `task`.
  void begin_task(std::size_t task);

  /// Streams rows of `domain_features` through Algorithm R.
  void offer(const Matrix& domain_features, std::span<const std::uint32_t> labels, Rng& rng);

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  std::uint64_t seen() const noexcept { return seen_; }
  std::size_t feature_dim() const noexcept { return dim_; }
  std::optional<std::size_t> source_task() const noexcept { return source_task_; }

  std::span<const double> feature(std::size_t i) const noexcept {
    return {features_.data() + i * dim_, dim_};
  }
  std::uint32_t label(std::size_t i) const noexcept { return labels_[i]; }

  // Raw state, for checkpointing.
  struct State {
    std::size_t capacity = 0;
    std::size_t feature_dim = 0;
    std::uint64_t seen = 0;
    std::optional<std::size_t> source_task;
    std::vector<double> features;
    std::vector<std::uint32_t> labels;
  };
  State state() const;
  static DomainFeatureReservoir from_state(State s);

  friend bool operator==(const DomainFeatureReservoir&, const DomainFeatureReservoir&) = default;

 private:
  std::size_t capacity_;
  std::size_t dim_ = 0;
  std::uint64_t seen_ = 0;
  std::optional<std::size_t> source_task_;
  std::vector<double> features_;
  std::vector<std::uint32_t> labels_;
};

}  // namespace driftfuse
