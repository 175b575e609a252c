#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reachmpc/controller.hpp"
#include "reachmpc/humans.hpp"

namespace reachmpc::harness {

/// Method set evaluated by the batch runner.
enum class MethodKind {
  Ours,
  None,
  ForwardRC,
  RCSimplified,
  RCComplex,
  Nav2D,
  DCStatic,
  DCConstVel,
  DCForecast,
};

std::string to_string(MethodKind kind);
MethodKind method_from_string(const std::string& name);
const std::vector<MethodKind>& all_methods();

struct SyntheticWalker {
  double speed = 1.0;
  double heading = 0.0;
  double duration = 40.0;
  double rate = 30.0;
  std::uint64_t seed = 0;
};

/// Trajectory source plus its placement in the world.
struct HumanSpec {
  std::optional<SyntheticWalker> synthetic;
  std::string csv_path;  ///< used when synthetic is absent
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();
  double yaw = 0.0;
};

struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 0;
  ControllerConfig controller = ControllerConfig::defaults();
  MethodKind method = MethodKind::Ours;
  MavState x0;
  std::optional<Eigen::Vector3d> goal;  ///< absent in visual-servo scenarios
  std::vector<HumanSpec> humans;
  double disturbance_std = 0.0;
  double dropout_prob = 0.0;
  double latency = 0.0;
  double timeout = 30.0;
};

std::string scenario_to_json(const Scenario& sc);
Scenario scenario_from_json(const std::string& text);
Scenario load_scenario(const std::string& path);
void save_scenario(const Scenario& sc, const std::string& path);

/// Materialize a human trajectory (synthetic walker or CSV) in world frame.
JointTrajectory load_human(const HumanSpec& spec);

}  // namespace reachmpc::harness
