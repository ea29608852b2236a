#include "driftfuse/report.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "driftfuse/errors.hpp"

namespace driftfuse {

using nlohmann::json;

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string metrics_csv(const AccuracyMatrix& acc) {
  std::ostringstream out;
  out << "stage";
  for (const auto& name : acc.domain_names) out << ',' << name;
  out << ",seen_pooled,seen_mean\n";
  for (std::size_t t = 0; t < acc.grid.size(); ++t) {
    out << t;
    for (double a : acc.grid[t]) out << ',' << format_number(a);
    out << ',' << format_number(acc.stage_pooled[t]) << ',' << format_number(acc.stage_mean[t])
        << '\n';
  }
  return out.str();
}

std::string report_json(const RunReport& report, const AccuracyMatrix& acc, const RunConfig& cfg,
                        const std::string& data_source) {
  json j;
  j["avg"] = report.avg;
  j["last"] = report.last;
  j["forgetting"] = report.forgetting;
  j["unseen_accuracy"] = report.unseen_accuracy ? json(*report.unseen_accuracy) : json(nullptr);
  j["stage_acc"] = acc.stage_acc;
  j["stage_pooled"] = acc.stage_pooled;
  j["stage_mean"] = acc.stage_mean;
  j["domains"] = acc.domain_names;
  j["train_domains"] = acc.train_domains;
  j["seed"] = report.seed;
  j["total_steps"] = report.total_steps;
  j["wall_seconds"] = report.wall_seconds;
  j["data"] = data_source;
  json flat = json::object();
  for (const auto& [key, value] : flatten(cfg)) flat[key] = value;
  j["config"] = std::move(flat);
  j["config_ini"] = to_ini(cfg);
  return j.dump(2) + "\n";
}

ReplayInfo replay_from_report(const std::filesystem::path& report_path) {
  std::ifstream in(report_path, std::ios::binary);
  if (!in) throw ConfigError("cannot open report " + report_path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(report_path.string() + ": " + e.what());
  }
  if (!j.contains("config_ini") || !j["config_ini"].is_string()) {
    throw ConfigError(report_path.string() + ": no config echo to replay");
  }
  ReplayInfo info;
  info.config = parse_config(j["config_ini"].get<std::string>(), report_path.string());
  info.data_source = j.value("data", std::string("synthetic"));
  return info;
}

std::string ablation_csv(std::span<const AblationResult> rows) {
  std::ostringstream out;
  out << "row,disentangle,fusion,swap,mean_avg,mean_last,mean_unseen,mean_forgetting0";
  if (!rows.empty()) {
    for (const auto& r : rows.front().runs) out << ",avg_seed" << r.seed;
  }
  out << '\n';
  for (const auto& r : rows) {
    const AblationFlags f = flags_for(r.row);
    out << to_string(r.row) << ',' << f.disentangle << ',' << f.fusion << ',' << f.swap << ','
        << format_number(r.mean_avg) << ',' << format_number(r.mean_last) << ','
        << format_number(r.mean_unseen) << ',' << format_number(r.mean_forgetting0);
    for (const auto& run : r.runs) out << ',' << format_number(run.avg);
    out << '\n';
  }
  return out.str();
}

std::string sweep_csv(std::span<const SweepResult> rows) {
  std::ostringstream out;
  out << "q,lambda,avg,last\n";
  for (const auto& r : rows) {
    out << format_number(r.point.q) << ',' << format_number(r.point.lambda) << ','
        << format_number(r.report.avg) << ',' << format_number(r.report.last) << '\n';
  }
  return out.str();
}

std::string accuracy_svg(const AccuracyMatrix& acc) {
  constexpr double width = 640, height = 400, margin = 48;
  const std::size_t stages = acc.grid.size();
  auto x = [&](std::size_t t) {
    return stages <= 1 ? width / 2
                       : margin + (width - 2 * margin) * static_cast<double>(t) /
                                      static_cast<double>(stages - 1);
  };
  auto y = [&](double a) { return height - margin - (height - 2 * margin) * a; };
  const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                           "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width + 90 << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double a = tick / 4.0;
    out << "<line x1=\"" << margin << "\" x2=\"" << width - margin << "\" y1=\"" << y(a)
        << "\" y2=\"" << y(a) << "\" stroke=\"#ddd\"/>";
    out << "<text x=\"" << margin - 6 << "\" y=\"" << y(a) + 4 << "\" text-anchor=\"end\">" << a
        << "</text>\n";
  }
  for (std::size_t t = 0; t < stages; ++t) {
    out << "<text x=\"" << x(t) << "\" y=\"" << height - margin + 16
        << "\" text-anchor=\"middle\">" << t << "</text>\n";
  }

  auto polyline = [&](const std::vector<std::pair<std::size_t, double>>& pts, const char* color,
                      double stroke, const std::string& label, std::size_t slot) {
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << stroke
        << "\" points=\"";
    for (const auto& [t, a] : pts) out << x(t) << ',' << y(a) << ' ';
    out << "\"/>\n";
    out << "<text x=\"" << width - margin + 4 << "\" y=\"" << margin + 14.0 * slot
        << "\" fill=\"" << color << "\">" << label << "</text>\n";
  };

  std::vector<std::pair<std::size_t, double>> stage_pts;
  for (std::size_t t = 0; t < stages; ++t) stage_pts.emplace_back(t, acc.stage_acc[t]);
  polyline(stage_pts, "black", 2.5, "seen", 0);
  for (std::size_t d = 0; d < acc.train_domains; ++d) {
    std::vector<std::pair<std::size_t, double>> pts;
    for (std::size_t t = d; t < stages; ++t) pts.emplace_back(t, acc.grid[t][d]);
    if (!pts.empty()) polyline(pts, palette[d % 8], 1.2, acc.domain_names[d], d + 1);
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace driftfuse
