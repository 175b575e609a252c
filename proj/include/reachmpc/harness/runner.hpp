#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "reachmpc/harness/scenario.hpp"

namespace reachmpc::harness {

/// One record per control step at the 1/Ts control rate.
struct StepRecord {
  double t = 0.0;
  StateVec state;
  double yaw = 0.0;
  InputVec u0;
  int solver_status = 0;  ///< 0 optimal, 1 max-iterations, 2 infeasible
  double solve_ms = 0.0;
  double assembly_ms = 0.0;
  bool softened = false;
  bool fallback = false;
  double min_joint_dist = 0.0;  ///< against true replayed joints
  double min_prim_dist = 0.0;   ///< signed, against zero-growth primitives
  int safety_rows = 0;
  bool feasible = true;
  int violated_rows = 0;
  double epsilon = 0.0;
};

struct RunMeta {
  std::string scenario_name;
  std::string method;
  int horizon = 0;
  int n_humans = 0;
  std::uint64_t seed = 0;
  bool reached_goal = false;
  double time_to_goal = 0.0;  ///< valid when reached_goal
  double duration = 0.0;
};

struct RunLog {
  RunMeta meta;
  std::vector<StepRecord> steps;
};

struct Metrics {
  bool collision_avoided = true;  ///< min true-joint distance >= 0.5 m throughout
  std::optional<double> time_to_goal;
  double mean_solver_ms = 0.0;
  double max_solver_ms = 0.0;
  double mean_assembly_ms = 0.0;
  double max_assembly_ms = 0.0;
  double min_joint_distance = std::numeric_limits<double>::infinity();
  int softened_after_first = 0;  ///< softened steps excluding step 0
  int fallback_steps = 0;
};

inline constexpr double kCollisionThreshold = 0.5;  // m

/// Closed-loop simulation of one scenario.
std::pair<RunLog, Metrics> run_scenario(const Scenario& sc);

/// Metrics are recomputable from the log alone.
Metrics metrics_from_log(const RunLog& log);

/// JSON-lines run log: meta object on the first line, one object per step after.
void write_runlog(const RunLog& log, const std::string& path);
RunLog read_runlog(const std::string& path);

/// Constraint builder implementing the given baseline; empty for the default.
ConstraintBuilder method_constraints(MethodKind kind);

/// Method-specific scenario mutation (2D navigation pins altitude).
Scenario apply_method(Scenario sc);

}  // namespace reachmpc::harness
