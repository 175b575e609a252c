#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace reachmpc {

inline constexpr int kNumJoints = 24;

/// SMPL 24-joint convention, pelvis = 0. Downstream skeleton mapping
/// depends on this indexing.
namespace joint {
inline constexpr int pelvis = 0, left_hip = 1, right_hip = 2, spine1 = 3;
inline constexpr int left_knee = 4, right_knee = 5, spine2 = 6;
inline constexpr int left_ankle = 7, right_ankle = 8, spine3 = 9;
inline constexpr int left_foot = 10, right_foot = 11, neck = 12;
inline constexpr int left_collar = 13, right_collar = 14, head = 15;
inline constexpr int left_shoulder = 16, right_shoulder = 17;
inline constexpr int left_elbow = 18, right_elbow = 19;
inline constexpr int left_wrist = 20, right_wrist = 21;
inline constexpr int left_hand = 22, right_hand = 23;
}  // namespace joint

/// Timestamped 24-joint observation, world frame, z-up.
struct HumanFrame {
  double t = 0.0;
  std::array<Eigen::Vector3d, kNumJoints> joints{};
  std::array<double, kNumJoints> observed_at{};  ///< per-joint staleness source
};

struct JointTrajectory {
  std::vector<HumanFrame> frames;  ///< strictly increasing timestamps
  double rate = 0.0;               ///< nominal frame rate [Hz]

  double t_first() const { return frames.front().t; }
  double t_last() const { return frames.back().t; }
};

/// CSV schema: header "frame,time,joint,x,y,z", one row per joint per frame.
/// Throws std::runtime_error naming the offending line/frame on schema errors.
JointTrajectory load_trajectory(const std::string& path);
void save_trajectory(const JointTrajectory& traj, const std::string& path);

struct SampledFrame {
  HumanFrame frame;
  bool clamped = false;  ///< t was outside the trajectory range
};

/// Linear per-joint interpolation between bracketing frames.
SampledFrame sample(const JointTrajectory& traj, double t);

/// Rigid transform applied to every frame (rotation about z then translation).
JointTrajectory transform_trajectory(const JointTrajectory& traj,
                                     const Eigen::Vector3d& offset, double yaw);

/// Kinematic 24-joint walker: root advances at constant speed along the
/// heading, limbs swing sinusoidally with amplitudes scaled so that every
/// joint respects |v| <= v_max and |a| <= a_max. Deterministic per seed.
JointTrajectory synth_walk(double speed, double heading, double duration, double rate,
                           std::uint64_t seed, double v_max = 1.0, double a_max = 1.0);

enum class ForecasterKind { Static, ConstantVelocity, External };

/// Precomputed forecasts keyed by base time; schema adds a lead_step column.
struct ExternalForecasts {
  std::map<double, std::vector<HumanFrame>> by_base_time;
};
std::shared_ptr<ExternalForecasts> load_forecasts(const std::string& path);
void save_forecasts(const std::map<double, std::vector<HumanFrame>>& data,
                    const std::string& path);

struct ForecasterConfig {
  ForecasterKind kind = ForecasterKind::ConstantVelocity;
  int history = 10;  ///< window length for the velocity fit, >= 2
  std::shared_ptr<ExternalForecasts> external;
};

struct ForecastResult {
  std::vector<HumanFrame> frames;  ///< length T, lead times k*Ts past the last frame
  bool fell_back = false;          ///< insufficient history, Static used
};

ForecastResult forecast(const ForecasterConfig& cfg, const std::vector<HumanFrame>& history,
                        int T, double Ts);

/// Observation-effect model: per-joint i.i.d. dropout keeps the previously
/// delivered position/observed_at; latency shifts what the consumer sees.
HumanFrame degrade(const HumanFrame& frame, const HumanFrame* previous, double dropout_prob,
                   double latency, std::mt19937_64& rng);

/// Stateful wrapper tracking the last delivered observation per human.
class ObservationPipeline {
 public:
  ObservationPipeline(double dropout_prob, double latency, std::uint64_t seed)
      : dropout_(dropout_prob), latency_(latency), rng_(seed) {}

  /// Observation available at wall time `now` (samples the trajectory at
  /// now - latency, then applies dropout).
  HumanFrame observe(const JointTrajectory& traj, double now);

 private:
  double dropout_;
  double latency_;
  std::mt19937_64 rng_;
  bool has_last_ = false;
  HumanFrame last_;
};

}  // namespace reachmpc
