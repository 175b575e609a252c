#pragma once

#include <array>
#include <string>
#include <vector>

#include "reachmpc/humans.hpp"
#include "reachmpc/primitives.hpp"

namespace reachmpc {

/// Growth-law and geometry parameters of the human over-approximation.
struct HumanReachParams {
  double rho_head = 0.2;
  double rho_torso = 0.3;
  double rho_arm = 0.205;
  double rho_hand = 0.1;
  double v_max = 1.0;   ///< per-joint speed bound [m/s]
  double a_max = 1.0;   ///< per-joint acceleration bound [m/s^2]
  double R_mav = 0.5;   ///< robot safety radius folded into every primitive
  double arm_span = 0.9;        ///< lateral inflation of the simplified cylinder
  double t_switch = 0.2;        ///< complex -> simplified switching time [s]
  double staleness_cap = 1.0;   ///< unobserved time after which v0 = v_max
};

enum class SegmentClass { Head, Torso, Arm, Hand };

double class_radius(SegmentClass cls, const HumanReachParams& params);

/// One skeleton primitive: capsule between two joints, or sphere (joint_b < 0).
struct SkeletonSegment {
  int joint_a;
  int joint_b;  ///< -1 for a sphere
  SegmentClass cls;
};

/// Fixed 14-primitive decomposition: 10 capsules along spine, neck, arms and
/// legs, plus spheres for head, both hands, and the pelvis.
struct SkeletonMap {
  std::vector<SkeletonSegment> segments;

  static SkeletonMap standard();
  std::string to_json() const;
  static SkeletonMap from_json(const std::string& text);
};

/// Latest per-joint observation with staleness and initial-speed estimates.
struct HumanObservation {
  HumanFrame frame;
  std::array<double, kNumJoints> v0{};          ///< clamped to [0, v_max]
  std::array<double, kNumJoints> unobserved{};  ///< now - observed_at

  /// v0 by finite-differencing the last two observed frames; joints with no
  /// usable history or staleness beyond the cap get v0 = v_max.
  static HumanObservation from_history(const std::vector<HumanFrame>& history, double now,
                                       const HumanReachParams& params);
};

/// Radius after t seconds of bounded double-integrator growth from speed v0.
double grow_radius(double base_radius, double t, double v0, const HumanReachParams& params);

/// 14 skeleton primitives grown to lead time t.
std::vector<ReachPrimitive> complex_set(const HumanObservation& obs, double t,
                                        const SkeletonMap& skeleton,
                                        const HumanReachParams& params);

/// Single vertical cylinder around the root joint grown to lead time t.
ReachPrimitive simplified_set(const HumanObservation& obs, double t,
                              const HumanReachParams& params);

/// Per-step primitive lists over the horizon; complex before the switching
/// time, simplified at and after it.
struct HumanReachableSet {
  std::vector<std::vector<ReachPrimitive>> steps;  ///< index k-1 holds step k
  double source_time = 0.0;
};

HumanReachableSet hybrid_set(const HumanObservation& obs, int T, double Ts,
                             const SkeletonMap& skeleton, const HumanReachParams& params);

enum class HumanSetRegime { Hybrid, Complex, Simplified };

/// Single-regime variant used by the RC baselines.
HumanReachableSet uniform_set(const HumanObservation& obs, int T, double Ts,
                              const SkeletonMap& skeleton, const HumanReachParams& params,
                              HumanSetRegime regime);

}  // namespace reachmpc
