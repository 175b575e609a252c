#pragma once

#include <string>
#include <vector>

#include "reachmpc/harness/runner.hpp"

namespace reachmpc::harness {

struct RunSummary {
  RunMeta meta;
  Metrics metrics;
};

/// Aggregate per (method, humans, horizon), in that sort order.
struct AggregateRow {
  std::string method;
  int n_humans = 0;
  int horizon = 0;
  int runs = 0;
  int reached = 0;
  double avoid_pct = 0.0;
  double mean_time_to_goal = 0.0;  ///< over goal-reaching runs
  double mean_solver_ms = 0.0;
  double max_solver_ms = 0.0;
  double mean_assembly_ms = 0.0;
  double mean_total_ms = 0.0;  ///< assemble + solve
};

std::vector<AggregateRow> aggregate(const std::vector<RunSummary>& runs);

std::string format_table(const std::vector<AggregateRow>& rows);
std::string format_csv(const std::vector<AggregateRow>& rows);

/// Reads every *.jsonl run log in a directory.
std::vector<RunSummary> load_run_dir(const std::string& dir);

}  // namespace reachmpc::harness
