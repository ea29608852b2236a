#include "driftfuse/reservoir.hpp"

#include <algorithm>
#include <string>

#include "driftfuse/errors.hpp"

namespace driftfuse {

void DomainFeatureReservoir::begin_task(std::size_t task) {
  features_.clear();
  labels_.clear();
  seen_ = 0;
  dim_ = 0;
  source_task_ = task;
}

void DomainFeatureReservoir::offer(const Matrix& domain_features,
                                   std::span<const std::uint32_t> labels, Rng& rng) {
  if (labels.size() != domain_features.rows()) {
    throw ShapeError("reservoir: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(domain_features.rows()) + " features");
  }
  if (domain_features.rows() == 0 || capacity_ == 0) return;
  if (dim_ == 0) {
    dim_ = domain_features.cols();
  } else if (dim_ != domain_features.cols()) {
    throw ShapeError("reservoir: feature width changed within a task");
  }

  for (std::size_t r = 0; r < domain_features.rows(); ++r) {
    auto row = domain_features.row(r);
    if (labels_.size() < capacity_) {
      features_.insert(features_.end(), row.begin(), row.end());
      labels_.push_back(labels[r]);
    } else {
      std::uniform_int_distribution<std::uint64_t> pick(0, seen_);
      const std::uint64_t j = pick(rng);
      if (j < capacity_) {
        std::copy(row.begin(), row.end(), features_.begin() + j * dim_);
        labels_[j] = labels[r];
      }
    }
    ++seen_;
  }
}

DomainFeatureReservoir::State DomainFeatureReservoir::state() const {
  return {capacity_, dim_, seen_, source_task_, features_, labels_};
}

DomainFeatureReservoir DomainFeatureReservoir::from_state(State s) {
  if (s.labels.size() > s.capacity || s.features.size() != s.labels.size() * s.feature_dim) {
    throw ShapeError("reservoir: inconsistent serialized state");
  }
  DomainFeatureReservoir r(s.capacity);
  r.dim_ = s.feature_dim;
  r.seen_ = s.seen;
  r.source_task_ = s.source_task;
  r.features_ = std::move(s.features);
  r.labels_ = std::move(s.labels);
  return r;
}

}  // namespace driftfuse
