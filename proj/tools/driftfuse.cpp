// driftfuse command-line tool: gen | train | eval | ablate | sweep | inspect.
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "driftfuse/checkpoint.hpp"
#include "driftfuse/config.hpp"
#include "driftfuse/errors.hpp"
#include "driftfuse/experiments.hpp"
#include "driftfuse/feature_io.hpp"
#include "driftfuse/report.hpp"
#include "driftfuse/trainer.hpp"

namespace fs = std::filesystem;
using namespace driftfuse;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kFormat = 3, kNumerical = 4 };

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_config(c.config_path);
  for (const auto& o : c.overrides) apply_override(cfg, o);
  return cfg;
}

DomainStream load_data(const std::string& data, const RunConfig& cfg) {
  if (data.empty() || data == "synthetic") return generate_synthetic(synthetic_config(cfg));
  return load_stream(data, cfg.layout);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw FormatError(FormatErrorKind::io,
                      "cannot create output directory " + dir.string() + ": " + ec.message());
  }
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad seed '" + item + "' in --seeds");
    }
  }
  if (seeds.empty()) throw ConfigError("--seeds is empty");
  return seeds;
}

// "paper" or a comma list of q:lambda pairs.
std::vector<SweepPoint> parse_grid(const std::string& text) {
  if (text == "paper") return paper_grid();
  std::vector<SweepPoint> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument(item);
      grid.push_back({std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
    } catch (const std::exception&) {
      throw ConfigError("bad grid point '" + item + "' (expected q:lambda)");
    }
  }
  if (grid.empty()) throw ConfigError("sweep grid is empty");
  return grid;
}

int cmd_gen(const Common& common, const std::string& out) {
  const RunConfig cfg = resolve_config(common);
  const SyntheticConfig syn = synthetic_config(cfg);
  ensure_dir(out);
  const auto pools = generate_domain_pools(syn);
  const auto names = synthetic_domain_names(syn);
  const auto written =
      write_domain_files(out, pools, names, static_cast<std::uint32_t>(syn.classes));
  for (const auto& p : written) std::cout << p.string() << '\n';
  return kOk;
}

struct TrainArgs {
  std::string data;
  std::string out = "run";
  std::string ablation;
  std::optional<std::uint64_t> seed;
  std::string resume;
  std::string replay;
  bool svg = false;
  std::optional<std::size_t> stop_after;
};

int cmd_train(const Common& common, const TrainArgs& args) {
  RunConfig cfg;
  std::string data = args.data;
  if (!args.replay.empty()) {
    ReplayInfo info = replay_from_report(args.replay);
    cfg = info.config;
    if (data.empty()) data = info.data_source;
    for (const auto& o : common.overrides) apply_override(cfg, o);
  } else {
    cfg = resolve_config(common);
  }
  if (!args.ablation.empty()) cfg.train.ablation = flags_for(parse_ablation_row(args.ablation));
  if (args.seed) cfg.train.seed = *args.seed;
  if (data.empty()) data = "synthetic";

  const DomainStream stream = load_data(data, cfg);
  const fs::path out(args.out);
  ensure_dir(out);

  RunOptions opts;
  opts.checkpoint_path = out / "checkpoint.bin";
  opts.stop_after_tasks = args.stop_after;

  RunResult result;
  if (!args.resume.empty()) {
    Checkpoint cp = load_checkpoint(args.resume);
    if (cp.config_text != to_ini(cfg.train)) {
      throw ConfigError("checkpoint " + args.resume + " was written under a different config");
    }
    result = resume_sequence(stream, cfg.train, std::move(cp.state), opts);
  } else {
    result = run_sequence(stream, cfg.train, opts);
  }

  write_file_atomic(out / "metrics.csv", metrics_csv(result.accuracy));
  if (!result.complete) {
    std::cout << "stopped after " << result.state.tasks_completed << " of " << stream.tasks.size()
              << " tasks; checkpoint at " << (out / "checkpoint.bin").string() << '\n';
    return kOk;
  }
  const std::string data_source =
      data == "synthetic" ? data : fs::absolute(fs::path(data)).lexically_normal().string();
  write_file_atomic(out / "report.json",
                    report_json(result.report, result.accuracy, cfg, data_source));
  if (args.svg) write_file_atomic(out / "accuracy.svg", accuracy_svg(result.accuracy));

  std::printf("avg %.4f  last %.4f", result.report.avg, result.report.last);
  if (result.report.unseen_accuracy) std::printf("  unseen %.4f", *result.report.unseen_accuracy);
  std::printf("  (%.1fs)\n", result.report.wall_seconds);
  return kOk;
}

int cmd_eval(const Common& common, const std::string& checkpoint, const std::string& data) {
  const RunConfig cfg = resolve_config(common);
  const Checkpoint cp = load_checkpoint(checkpoint);
  const DomainStream stream = load_data(data, cfg);
  if (stream.feature_dim != cp.state.model.feature_dim()) {
    throw FormatError(FormatErrorKind::dimension_mismatch,
                      "data has feature_dim " + std::to_string(stream.feature_dim) +
                          " but the checkpoint expects " +
                          std::to_string(cp.state.model.feature_dim()));
  }
  std::cout << "domain,role,accuracy\n";
  for (std::size_t d = 0; d < stream.total_domains(); ++d) {
    const DomainSplit& split = stream.domain(d);
    std::cout << split.name << ',' << (d < stream.tasks.size() ? "train" : "unseen") << ','
              << format_number(evaluate(cp.state.model, split.test)) << '\n';
  }
  return kOk;
}

int cmd_ablate(const Common& common, const std::string& data, const std::string& seeds,
               const std::string& out, std::size_t workers) {
  const RunConfig cfg = resolve_config(common);
  const DomainStream stream = load_data(data, cfg);
  const auto seed_list = parse_seeds(seeds);
  const auto rows = ablate(stream, cfg.train, seed_list, worker_count(workers));
  const std::string csv = ablation_csv(rows);
  if (!out.empty()) write_file_atomic(out, csv);
  std::cout << csv;
  return kOk;
}

int cmd_sweep(const Common& common, const std::string& data, const std::string& grid,
              const std::string& out, std::size_t workers) {
  const RunConfig cfg = resolve_config(common);
  const auto points = parse_grid(grid);
  const DomainStream stream = load_data(data, cfg);
  const auto rows = sweep(stream, cfg.train, points, worker_count(workers));
  const std::string csv = sweep_csv(rows);
  if (!out.empty()) write_file_atomic(out, csv);
  std::cout << csv;
  return kOk;
}

int cmd_inspect(const Common& common, const std::string& target, bool schema) {
  if (schema) {
    for (const auto& [key, doc] : config_schema()) std::cout << key << "  " << doc << '\n';
    return kOk;
  }
  if (target.empty()) {
    std::cout << to_ini(resolve_config(common));
    return kOk;
  }
  const fs::path p(target);
  if (fs::is_directory(p)) {
    const Manifest m = read_manifest(p / kManifestName);
    for (const auto& [k, v] : m.metadata) std::cout << "# " << k << ": " << v << '\n';
    for (std::size_t i = 0; i < m.domains.size(); ++i) {
      const auto h = read_feature_header(p / m.domains[i].file);
      std::cout << i << ' ' << m.domains[i].name << ' ' << m.domains[i].file
                << " records=" << h.record_count << " dim=" << h.feature_dim
                << " classes=" << h.num_classes << '\n';
    }
    return kOk;
  }
  std::ifstream in(p, std::ios::binary);
  char magic[4] = {};
  if (!in.read(magic, 4)) {
    throw FormatError(FormatErrorKind::io, "cannot read " + p.string());
  }
  if (std::equal(magic, magic + 4, kCheckpointMagic)) {
    const Checkpoint cp = load_checkpoint(p);
    const auto& s = cp.state;
    std::cout << "checkpoint " << p.string() << "\n  tasks_completed " << s.tasks_completed
              << "\n  global_step " << s.global_step << "\n  feature_dim "
              << s.model.feature_dim() << "\n  latent_dim " << s.model.latent_dim()
              << "\n  classes " << s.model.num_classes() << "\n  reservoir " << s.reservoir.size()
              << '/' << s.reservoir.capacity() << "\n  snapshot "
              << (s.snapshot ? "task " + std::to_string(s.snapshot->captured_task) : "none")
              << "\n\n"
              << cp.config_text;
    return kOk;
  }
  const auto h = read_feature_header(p);
  std::cout << "DIFZ v" << h.version << " records=" << h.record_count << " dim=" << h.feature_dim
            << " classes=" << h.num_classes << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain-incremental learning with disentangled two-stream models"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("-c,--config", common.config_path, "ini config file")->check(CLI::ExistingFile);
  app.add_option("--set", common.overrides, "override, section.key=value (repeatable)");

  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "write the synthetic benchmark as DIFZ files");
  gen->add_option("-o,--out", gen_out, "output directory")->required();

  TrainArgs targs;
  auto* train = app.add_subcommand("train", "train one domain sequence");
  train->add_option("-d,--data", targs.data, "feature directory (default: synthetic)");
  train->add_option("-o,--out", targs.out, "output directory")->capture_default_str();
  train->add_option("--ablation", targs.ablation, "none | disen | disen+fusion | all");
  train->add_option("--seed", targs.seed, "training seed");
  train->add_option("--resume", targs.resume, "continue from a checkpoint");
  train->add_option("--replay", targs.replay, "rerun the config echoed in a report.json");
  train->add_option("--stop-after", targs.stop_after, "stop after this many tasks");
  train->add_flag("--svg", targs.svg, "also write accuracy.svg");

  std::string eval_ckpt, eval_data;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on every domain's test split");
  eval->add_option("checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("-d,--data", eval_data, "feature directory (default: synthetic)");

  std::string ab_data, ab_seeds = "0,1,2,3,4", ab_out;
  std::size_t ab_workers = 0;
  auto* abl = app.add_subcommand("ablate", "component ablation over shared seeds");
  abl->add_option("-d,--data", ab_data, "feature directory (default: synthetic)");
  abl->add_option("--seeds", ab_seeds, "comma-separated seeds")->capture_default_str();
  abl->add_option("-o,--out", ab_out, "write the table to this CSV");
  abl->add_option("-j,--workers", ab_workers, "parallel runs (0 = all cores)");

  std::string sw_data, sw_grid = "paper", sw_out;
  std::size_t sw_workers = 0;
  auto* swp = app.add_subcommand("sweep", "q / lambda sensitivity sweep");
  swp->add_option("-d,--data", sw_data, "feature directory (default: synthetic)");
  swp->add_option("--grid", sw_grid, "'paper' or q:lambda[,q:lambda...]")->capture_default_str();
  swp->add_option("-o,--out", sw_out, "write the table to this CSV");
  swp->add_option("-j,--workers", sw_workers, "parallel runs (0 = all cores)");

  std::string insp_target;
  bool insp_schema = false;
  auto* insp = app.add_subcommand(
      "inspect", "describe a DIFZ file, data directory or checkpoint; no argument prints the config");
  insp->add_option("target", insp_target, "file or directory");
  insp->add_flag("--schema", insp_schema, "list every config key");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*gen) return cmd_gen(common, gen_out);
    if (*train) return cmd_train(common, targs);
    if (*eval) return cmd_eval(common, eval_ckpt, eval_data);
    if (*abl) return cmd_ablate(common, ab_data, ab_seeds, ab_out, ab_workers);
    if (*swp) return cmd_sweep(common, sw_data, sw_grid, sw_out, sw_workers);
    if (*insp) return cmd_inspect(common, insp_target, insp_schema);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const FormatError& e) {
    std::cerr << "data error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return kFormat;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kFormat;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
