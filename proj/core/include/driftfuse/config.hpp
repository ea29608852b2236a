#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "driftfuse/data.hpp"
#include "driftfuse/trainer.hpp"

namespace driftfuse {

/// Everything one invocation needs: where the data comes from and how to
/// train on it. Serialized as an ini file with sections
/// [data] [synthetic] [model] [train] [optimizer] [fusion] [ablation].
struct RunConfig {
  StreamLayout layout;          // [data]
  SyntheticConfig synthetic;    // [synthetic]; its split fields mirror `layout`
  TrainConfig train;            // [model] [train] [optimizer] [fusion] [ablation]
};

/// Synthetic config with the split fields taken from `layout`.
SyntheticConfig synthetic_config(const RunConfig& cfg);

RunConfig parse_config(std::string_view ini_text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Applies one `section.key=value` override.
void apply_override(RunConfig& cfg, std::string_view assignment);

/// Canonical ini text; parse_config(to_ini(c)) reproduces c exactly
/// (doubles are written in shortest round-trip form).
std::string to_ini(const RunConfig& cfg);
std::string to_ini(const TrainConfig& cfg);

/// Every key as ("section.key", value) in schema order.
std::vector<std::pair<std::string, std::string>> flatten(const RunConfig& cfg);

/// The documented schema: ("section.key", description) pairs.
std::vector<std::pair<std::string, std::string>> config_schema();

}  // namespace driftfuse
