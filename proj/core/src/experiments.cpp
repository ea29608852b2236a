#include "driftfuse/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <exception>
#include <thread>

#include "driftfuse/errors.hpp"

namespace driftfuse {

AblationFlags flags_for(AblationRow row) {
  switch (row) {
    case AblationRow::none: return {false, false, false};
    case AblationRow::disentangle: return {true, false, false};
    case AblationRow::disentangle_fusion: return {true, true, false};
    case AblationRow::all: return {true, true, true};
  }
  return {};
}

std::string to_string(AblationRow row) {
  switch (row) {
    case AblationRow::none: return "none";
    case AblationRow::disentangle: return "disen";
    case AblationRow::disentangle_fusion: return "disen+fusion";
    case AblationRow::all: return "all";
  }
  return "?";
}

AblationRow parse_ablation_row(std::string_view name) {
  for (AblationRow row : kAblationRows) {
    if (to_string(row) == name) return row;
  }
  throw ConfigError("unknown ablation '" + std::string(name) +
                    "' (expected none, disen, disen+fusion or all)");
}

std::size_t worker_count(std::size_t requested) {
  std::size_t n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("DRIFTFUSE_THREADS"); env && *env) {
    std::size_t cap = 0;
    const std::string_view s(env);
    auto res = std::from_chars(s.data(), s.data() + s.size(), cap);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || cap == 0) {
      throw ConfigError("DRIFTFUSE_THREADS must be a positive integer, got '" + std::string(s) + "'");
    }
    n = std::min(n, cap);
  }
  return n;
}

void run_parallel(std::size_t jobs, std::size_t workers,
                  const std::function<void(std::size_t)>& job) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(jobs, 1));
  std::vector<std::exception_ptr> errors(jobs);
  if (workers == 1) {
    for (std::size_t i = 0; i < jobs; ++i) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs; i = next++) {
          try {
            job(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<AblationResult> ablate(const DomainStream& stream, const TrainConfig& cfg,
                                   std::span<const std::uint64_t> seeds, std::size_t workers) {
  if (seeds.empty()) throw ConfigError("ablate: no seeds given");
  std::vector<AblationResult> out;
  for (AblationRow row : kAblationRows) out.push_back({row, std::vector<RunReport>(seeds.size())});

  run_parallel(kAblationRows.size() * seeds.size(), workers, [&](std::size_t job) {
    AblationResult& res = out[job / seeds.size()];
    TrainConfig run_cfg = cfg;
    run_cfg.ablation = flags_for(res.row);
    run_cfg.seed = seeds[job % seeds.size()];
    res.runs[job % seeds.size()] = run_sequence(stream, run_cfg).report;
  });

  for (auto& res : out) {
    const double n = static_cast<double>(res.runs.size());
    for (const auto& r : res.runs) {
      res.mean_avg += r.avg / n;
      res.mean_last += r.last / n;
      res.mean_unseen += r.unseen_accuracy.value_or(0.0) / n;
      res.mean_forgetting0 += r.forgetting.front() / n;
    }
  }
  return out;
}

std::vector<SweepPoint> paper_grid() {
  std::vector<SweepPoint> grid;
  for (double q : {0.1, 0.3, 0.5, 0.9}) grid.push_back({q, 5.0});
  for (double lambda : {1.0, 3.0, 5.0, 7.0, 9.0}) grid.push_back({0.7, lambda});
  return grid;
}

std::vector<SweepResult> sweep(const DomainStream& stream, const TrainConfig& cfg,
                               std::span<const SweepPoint> grid, std::size_t workers) {
  if (grid.empty()) throw ConfigError("sweep: empty grid");
  std::vector<SweepResult> out(grid.size());
  run_parallel(grid.size(), workers, [&](std::size_t i) {
    TrainConfig run_cfg = cfg;
    run_cfg.q = grid[i].q;
    run_cfg.lambda = grid[i].lambda;
    out[i] = {grid[i], run_sequence(stream, run_cfg).report};
  });
  return out;
}

}  // namespace driftfuse
