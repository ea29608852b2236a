#pragma once

#include "driftfuse/data.hpp"
#include "driftfuse/trainer.hpp"

namespace driftfuse::testing {

// A stream small enough to train in milliseconds.
inline SyntheticConfig tiny_synthetic(std::uint64_t seed = 0) {
  SyntheticConfig s;
  s.num_domains = 3;
  s.unseen_domains = 1;
  s.classes = 4;
  s.feature_dim = 12;
  s.samples_per_domain = 160;
  s.intrinsic_rank = 4;
  s.nuisance_rank = 4;
  s.seed = seed;
  return s;
}

inline TrainConfig tiny_train(std::uint64_t seed = 0) {
  TrainConfig t;
  t.model.hidden_width = 16;
  t.model.latent_dim = 6;
  t.epochs = 2;
  t.batch_size = 32;
  t.warmup_steps = 3;
  t.reservoir_capacity = 32;
  t.seed = seed;
  return t;
}

}  // namespace driftfuse::testing
