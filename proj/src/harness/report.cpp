#include "reachmpc/harness/report.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>

namespace reachmpc::harness {

std::vector<AggregateRow> aggregate(const std::vector<RunSummary>& runs) {
  std::map<std::tuple<std::string, int, int>, std::vector<const RunSummary*>> groups;
  for (const auto& r : runs) {
    groups[{r.meta.method, r.meta.n_humans, r.meta.horizon}].push_back(&r);
  }
  std::vector<AggregateRow> rows;
  for (const auto& [key, members] : groups) {
    AggregateRow row;
    row.method = std::get<0>(key);
    row.n_humans = std::get<1>(key);
    row.horizon = std::get<2>(key);
    row.runs = static_cast<int>(members.size());
    int avoided = 0;
    double ttg_sum = 0.0;
    double solver_sum = 0.0, asm_sum = 0.0;
    for (const RunSummary* r : members) {
      if (r->metrics.collision_avoided) ++avoided;
      if (r->metrics.time_to_goal.has_value()) {
        ++row.reached;
        ttg_sum += *r->metrics.time_to_goal;
      }
      solver_sum += r->metrics.mean_solver_ms;
      asm_sum += r->metrics.mean_assembly_ms;
      row.max_solver_ms = std::max(row.max_solver_ms, r->metrics.max_solver_ms);
    }
    row.avoid_pct = 100.0 * avoided / row.runs;
    row.mean_time_to_goal = row.reached > 0 ? ttg_sum / row.reached : 0.0;
    row.mean_solver_ms = solver_sum / row.runs;
    row.mean_assembly_ms = asm_sum / row.runs;
    row.mean_total_ms = row.mean_solver_ms + row.mean_assembly_ms;
    rows.push_back(row);
  }
  return rows;
}

std::string format_table(const std::vector<AggregateRow>& rows) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-14s %7s %8s %5s %8s %10s %10s %12s %11s\n", "Method",
                "Humans", "Horizon", "Runs", "Reached", "Avoid[%]", "TTG[s]", "Solve[ms]",
                "Asm[ms]");
  os << buf;
  os << std::string(92, '-') << "\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-14s %7d %8d %5d %8d %10.1f %10.2f %12.3f %11.3f\n",
                  r.method.c_str(), r.n_humans, r.horizon, r.runs, r.reached, r.avoid_pct,
                  r.mean_time_to_goal, r.mean_solver_ms, r.mean_assembly_ms);
    os << buf;
  }
  return os.str();
}

std::string format_csv(const std::vector<AggregateRow>& rows) {
  std::ostringstream os;
  os << "method,humans,horizon,runs,reached,collision_avoidance_pct,mean_time_to_goal_s,"
        "mean_solver_ms,max_solver_ms,mean_assembly_ms,mean_total_ms\n";
  for (const auto& r : rows) {
    os << r.method << ',' << r.n_humans << ',' << r.horizon << ',' << r.runs << ','
       << r.reached << ',' << r.avoid_pct << ',' << r.mean_time_to_goal << ','
       << r.mean_solver_ms << ',' << r.max_solver_ms << ',' << r.mean_assembly_ms << ','
       << r.mean_total_ms << '\n';
  }
  return os.str();
}

std::vector<RunSummary> load_run_dir(const std::string& dir) {
  std::vector<std::string> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".jsonl") paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<RunSummary> out;
  out.reserve(paths.size());
  for (const auto& p : paths) {
    const RunLog log = read_runlog(p);
    out.push_back({log.meta, metrics_from_log(log)});
  }
  return out;
}

}  // namespace reachmpc::harness
