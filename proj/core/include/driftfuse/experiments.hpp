#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "driftfuse/trainer.hpp"

namespace driftfuse {

/// Rows of the component ablation, in order: nothing, two-stream objective,
/// plus fusion, plus swapping.
enum class AblationRow { none, disentangle, disentangle_fusion, all };

inline constexpr std::array<AblationRow, 4> kAblationRows{
    AblationRow::none, AblationRow::disentangle, AblationRow::disentangle_fusion,
    AblationRow::all};

AblationFlags flags_for(AblationRow row);
std::string to_string(AblationRow row);
/// Accepts none | disen | disen+fusion | all.
AblationRow parse_ablation_row(std::string_view name);

/// Worker count: `requested` (0 = hardware concurrency), capped by the
/// DRIFTFUSE_THREADS environment variable when it is set.
std::size_t worker_count(std::size_t requested = 0);

/// Runs `jobs` independent tasks over at most `workers` threads. Results keep
/// the job order; the first exception (by job index) is rethrown.
void run_parallel(std::size_t jobs, std::size_t workers,
                  const std::function<void(std::size_t)>& job);

struct AblationResult {
  AblationRow row;
  std::vector<RunReport> runs;  // one per seed, seed order
  double mean_avg = 0.0;
  double mean_last = 0.0;
  double mean_unseen = 0.0;      // 0 when the stream has no unseen domains
  double mean_forgetting0 = 0.0; // forgetting of the first training domain
};

std::vector<AblationResult> ablate(const DomainStream& stream, const TrainConfig& cfg,
                                   std::span<const std::uint64_t> seeds, std::size_t workers);

struct SweepPoint {
  double q = 0.7;
  double lambda = 5.0;
};

/// q in {0.1, 0.3, 0.5, 0.9} at lambda 5, then lambda in {1, 3, 5, 7, 9} at q 0.7.
std::vector<SweepPoint> paper_grid();

struct SweepResult {
  SweepPoint point;
  RunReport report;
};

std::vector<SweepResult> sweep(const DomainStream& stream, const TrainConfig& cfg,
                               std::span<const SweepPoint> grid, std::size_t workers);

}  // namespace driftfuse
