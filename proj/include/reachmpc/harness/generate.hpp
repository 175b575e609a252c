#pragma once

#include "reachmpc/harness/scenario.hpp"

namespace reachmpc::harness {

/// Sampling space for goal-directed scenarios with crossing walkers. The
/// walker paths cross the start-goal segment, timed against the expected
/// MAV transit so the conflict actually materializes.
struct GenConfig {
  int n = 50;
  int humans = 1;
  std::uint64_t seed = 7;
  double dist_min = 6.0;
  double dist_max = 10.0;
  double alt_min = 0.9;
  double alt_max = 1.6;
  double walker_speed_min = 0.5;
  double walker_speed_max = 1.0;
  double mav_transit_speed = 0.8;  ///< crossing-time estimate [m/s]
  double cross_jitter = 1.5;       ///< s
  double clearance_margin = 0.3;   ///< extra start/goal clearance [m]
  MethodKind method = MethodKind::Ours;
  ControllerConfig controller = ControllerConfig::defaults();
  double timeout = 30.0;
  int max_tries = 10000;
};

/// Deterministic per seed. Start and goal are resampled until both clear the
/// t=0 primitives and the initial safety rows are feasible under the control
/// box. Throws std::runtime_error("scenario-space...") when the rejection
/// budget is exhausted.
std::vector<Scenario> gen_scenarios(const GenConfig& config);

}  // namespace reachmpc::harness
