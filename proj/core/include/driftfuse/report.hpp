#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "driftfuse/config.hpp"
#include "driftfuse/experiments.hpp"
#include "driftfuse/trainer.hpp"

namespace driftfuse {

/// One row per stage: accuracy on every domain, then the pooled and the
/// per-domain-mean seen accuracy.
std::string metrics_csv(const AccuracyMatrix& acc);

/// report.json body. `data_source` is the data directory, or "synthetic".
std::string report_json(const RunReport& report, const AccuracyMatrix& acc, const RunConfig& cfg,
                        const std::string& data_source);

struct ReplayInfo {
  RunConfig config;
  std::string data_source;
};

/// Reads the config echo back out of a report.json.
ReplayInfo replay_from_report(const std::filesystem::path& report_path);

std::string ablation_csv(std::span<const AblationResult> rows);
std::string sweep_csv(std::span<const SweepResult> rows);

/// Static line chart of stage accuracy plus one line per training domain.
std::string accuracy_svg(const AccuracyMatrix& acc);

/// Shortest text that parses back to the same double.
std::string format_number(double v);

}  // namespace driftfuse
