#include <algorithm>
#include <numeric>
#include <random>
#include <string>

#include "driftfuse/data.hpp"
#include "driftfuse/errors.hpp"

namespace driftfuse {

FeatureBatch::FeatureBatch(Matrix features, std::vector<std::uint32_t> labels,
                           std::vector<std::uint16_t> domain_ids)
    : features_(std::move(features)), labels_(std::move(labels)), domain_ids_(std::move(domain_ids)) {
  if (features_.rows() != labels_.size() || labels_.size() != domain_ids_.size()) {
    throw ShapeError("FeatureBatch: row counts differ (features " +
                     std::to_string(features_.rows()) + ", labels " +
                     std::to_string(labels_.size()) + ", domain ids " +
                     std::to_string(domain_ids_.size()) + ")");
  }
}

FeatureBatch FeatureBatch::select(std::span<const std::size_t> indices) const {
  Matrix f(indices.size(), feature_dim());
  std::vector<std::uint32_t> y(indices.size());
  std::vector<std::uint16_t> d(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= size()) throw ShapeError("FeatureBatch::select: index out of range");
    std::copy(features_.row(src).begin(), features_.row(src).end(), f.row(i).begin());
    y[i] = labels_[src];
    d[i] = domain_ids_[src];
  }
  return FeatureBatch(std::move(f), std::move(y), std::move(d));
}

FeatureBatch concat(const FeatureBatch& a, const FeatureBatch& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.feature_dim() != b.feature_dim()) throw ShapeError("concat: feature width mismatch");
  std::vector<double> values(a.features().values().begin(), a.features().values().end());
  values.insert(values.end(), b.features().values().begin(), b.features().values().end());
  std::vector<std::uint32_t> y(a.labels().begin(), a.labels().end());
  y.insert(y.end(), b.labels().begin(), b.labels().end());
  std::vector<std::uint16_t> d(a.domain_ids().begin(), a.domain_ids().end());
  d.insert(d.end(), b.domain_ids().begin(), b.domain_ids().end());
  const std::size_t rows = y.size();
  return FeatureBatch(Matrix(rows, a.feature_dim(), std::move(values)), std::move(y), std::move(d));
}

DomainStream assemble_stream(std::vector<FeatureBatch> pools, std::vector<std::string> names,
                             std::size_t num_classes, const StreamLayout& layout) {
  if (pools.size() != names.size()) throw ShapeError("assemble_stream: names/pools mismatch");
  if (layout.unseen_domains >= pools.size()) {
    throw ConfigError("assemble_stream: need at least one training domain (" +
                      std::to_string(pools.size()) + " domains, " +
                      std::to_string(layout.unseen_domains) + " unseen)");
  }
  if (!(layout.test_fraction > 0.0 && layout.test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in (0, 1)");
  }

  DomainStream stream;
  stream.num_classes = num_classes;
  stream.feature_dim = pools.front().feature_dim();
  const std::size_t train_domains = pools.size() - layout.unseen_domains;

  for (std::size_t i = 0; i < pools.size(); ++i) {
    FeatureBatch& pool = pools[i];
    if (pool.feature_dim() != stream.feature_dim) {
      throw ShapeError("assemble_stream: domain '" + names[i] + "' has a different feature width");
    }
    for (auto y : pool.labels()) {
      if (y >= num_classes) {
        throw ShapeError("assemble_stream: label " + std::to_string(y) + " in domain '" +
                         names[i] + "' exceeds class count");
      }
    }
    DomainSplit split;
    split.name = names[i];
    if (i >= train_domains) {
      split.test = std::move(pool);
      stream.unseen.push_back(std::move(split));
      continue;
    }
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(layout.split_seed * 1000003ULL + i);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_test = static_cast<std::size_t>(
        static_cast<double>(pool.size()) * layout.test_fraction + 0.5);
    std::vector<std::size_t> test_idx(order.begin(), order.begin() + n_test);
    std::vector<std::size_t> train_idx(order.begin() + n_test, order.end());
    std::sort(test_idx.begin(), test_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    split.train = pool.select(train_idx);
    split.test = pool.select(test_idx);
    stream.tasks.push_back(std::move(split));
  }
  return stream;
}

}  // namespace driftfuse
