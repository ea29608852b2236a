#pragma once

#include <vector>

#include "driftfuse/data.hpp"

namespace driftfuse {

/// Same as generate_domain_pools(cfg), additionally returning the nuisance
/// latent of every sample (one matrix per domain). Diagnostics only.
std::vector<FeatureBatch> generate_domain_pools(const SyntheticConfig& cfg,
                                                std::vector<Matrix>* nuisance_latents);

}  // namespace driftfuse
