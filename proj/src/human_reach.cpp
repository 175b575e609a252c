#include "reachmpc/human_reach.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace reachmpc {

namespace {

const char* class_name(SegmentClass c) {
  switch (c) {
    case SegmentClass::Head: return "head";
    case SegmentClass::Torso: return "torso";
    case SegmentClass::Arm: return "arm";
    case SegmentClass::Hand: return "hand";
  }
  return "?";
}

SegmentClass class_from_name(const std::string& s) {
  if (s == "head") return SegmentClass::Head;
  if (s == "torso") return SegmentClass::Torso;
  if (s == "arm") return SegmentClass::Arm;
  if (s == "hand") return SegmentClass::Hand;
  throw std::invalid_argument("unknown segment class: " + s);
}

}  // namespace

double class_radius(SegmentClass cls, const HumanReachParams& p) {
  switch (cls) {
    case SegmentClass::Head: return p.rho_head;
    case SegmentClass::Torso: return p.rho_torso;
    case SegmentClass::Arm: return p.rho_arm;
    case SegmentClass::Hand: return p.rho_hand;
  }
  return 0.0;
}

SkeletonMap SkeletonMap::standard() {
  SkeletonMap m;
  m.segments = {
      {joint::pelvis, joint::spine3, SegmentClass::Torso},       // spine
      {joint::spine3, joint::neck, SegmentClass::Torso},         // neck column
      {joint::left_shoulder, joint::left_elbow, SegmentClass::Arm},
      {joint::right_shoulder, joint::right_elbow, SegmentClass::Arm},
      {joint::left_elbow, joint::left_wrist, SegmentClass::Arm},
      {joint::right_elbow, joint::right_wrist, SegmentClass::Arm},
      {joint::left_hip, joint::left_knee, SegmentClass::Arm},    // thighs
      {joint::right_hip, joint::right_knee, SegmentClass::Arm},
      {joint::left_knee, joint::left_foot, SegmentClass::Arm},   // shin + foot
      {joint::right_knee, joint::right_foot, SegmentClass::Arm},
      {joint::head, -1, SegmentClass::Head},
      {joint::left_hand, -1, SegmentClass::Hand},
      {joint::right_hand, -1, SegmentClass::Hand},
      {joint::pelvis, -1, SegmentClass::Torso},
  };
  return m;
}

std::string SkeletonMap::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& s : segments) {
    nlohmann::json e;
    e["joint_a"] = s.joint_a;
    if (s.joint_b >= 0) e["joint_b"] = s.joint_b;
    e["class"] = class_name(s.cls);
    j.push_back(e);
  }
  return j.dump(2);
}

SkeletonMap SkeletonMap::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  SkeletonMap m;
  for (const auto& e : j) {
    SkeletonSegment s;
    s.joint_a = e.at("joint_a").get<int>();
    s.joint_b = e.contains("joint_b") ? e.at("joint_b").get<int>() : -1;
    s.cls = class_from_name(e.at("class").get<std::string>());
    if (s.joint_a < 0 || s.joint_a >= kNumJoints || s.joint_b >= kNumJoints) {
      throw std::invalid_argument("skeleton joint index out of range");
    }
    m.segments.push_back(s);
  }
  return m;
}

HumanObservation HumanObservation::from_history(const std::vector<HumanFrame>& history,
                                                double now, const HumanReachParams& params) {
  if (history.empty()) throw std::invalid_argument("HumanObservation: empty history");
  HumanObservation obs;
  obs.frame = history.back();
  const HumanFrame* prev = history.size() > 1 ? &history[history.size() - 2] : nullptr;
  for (int j = 0; j < kNumJoints; ++j) {
    obs.unobserved[j] = std::max(0.0, now - obs.frame.observed_at[j]);
    double v = params.v_max;  // no history: conservative
    if (prev != nullptr) {
      const double dt = obs.frame.observed_at[j] - prev->observed_at[j];
      if (dt > 1e-9) {
        v = (obs.frame.joints[j] - prev->joints[j]).norm() / dt;
      }
    }
    if (obs.unobserved[j] > params.staleness_cap) v = params.v_max;
    obs.v0[j] = std::clamp(v, 0.0, params.v_max);
  }
  return obs;
}

double grow_radius(double base_radius, double t, double v0, const HumanReachParams& p) {
  if (t < 0.0) throw std::invalid_argument("grow_radius: negative lead time");
  v0 = std::clamp(v0, 0.0, p.v_max);
  double delta;
  if (p.a_max <= 0.0) {
    delta = v0 * t;
  } else {
    const double t_sat = (p.v_max - v0) / p.a_max;
    if (t <= t_sat) {
      delta = v0 * t + 0.5 * p.a_max * t * t;
    } else {
      delta = (p.v_max * p.v_max - v0 * v0) / (2.0 * p.a_max) + p.v_max * (t - t_sat);
    }
  }
  return base_radius + delta;
}

std::vector<ReachPrimitive> complex_set(const HumanObservation& obs, double t,
                                        const SkeletonMap& skeleton,
                                        const HumanReachParams& params) {
  if (t < 0.0) throw std::invalid_argument("complex_set: negative lead time");
  std::vector<ReachPrimitive> out;
  out.reserve(skeleton.segments.size());
  for (const auto& seg : skeleton.segments) {
    const double base = class_radius(seg.cls, params) + params.R_mav;
    // Capsules take the worse of their two joints.
    double unobs = obs.unobserved[seg.joint_a];
    double v0 = obs.v0[seg.joint_a];
    if (seg.joint_b >= 0) {
      unobs = std::max(unobs, obs.unobserved[seg.joint_b]);
      v0 = std::max(v0, obs.v0[seg.joint_b]);
    }
    const double r = grow_radius(base, t + unobs, v0, params);
    if (seg.joint_b < 0) {
      out.push_back(Sphere{obs.frame.joints[seg.joint_a], r});
    } else {
      out.push_back(Capsule{obs.frame.joints[seg.joint_a], obs.frame.joints[seg.joint_b], r});
    }
  }
  return out;
}

ReachPrimitive simplified_set(const HumanObservation& obs, double t,
                              const HumanReachParams& params) {
  if (t < 0.0) throw std::invalid_argument("simplified_set: negative lead time");
  const int root = joint::pelvis;
  const double delta =
      grow_radius(0.0, t + obs.unobserved[root], obs.v0[root], params);
  double z_lo = obs.frame.joints[0].z();
  double z_hi = z_lo;
  for (const auto& j : obs.frame.joints) {
    z_lo = std::min(z_lo, j.z());
    z_hi = std::max(z_hi, j.z());
  }
  VerticalCylinder cyl;
  cyl.axis_xy = obs.frame.joints[root].head<2>();
  cyl.radius = delta + params.arm_span + params.R_mav;
  cyl.z_min = z_lo - delta - params.R_mav;
  cyl.z_max = z_hi + delta + params.R_mav;
  return cyl;
}

HumanReachableSet hybrid_set(const HumanObservation& obs, int T, double Ts,
                             const SkeletonMap& skeleton, const HumanReachParams& params) {
  return uniform_set(obs, T, Ts, skeleton, params, HumanSetRegime::Hybrid);
}

HumanReachableSet uniform_set(const HumanObservation& obs, int T, double Ts,
                              const SkeletonMap& skeleton, const HumanReachParams& params,
                              HumanSetRegime regime) {
  if (T < 1) throw std::invalid_argument("hybrid_set: horizon must be at least 1");
  HumanReachableSet set;
  set.source_time = obs.frame.t;
  set.steps.resize(T);
  for (int k = 1; k <= T; ++k) {
    const double t = k * Ts;
    const bool use_complex = regime == HumanSetRegime::Complex ||
                             (regime == HumanSetRegime::Hybrid && t < params.t_switch);
    if (use_complex) {
      set.steps[k - 1] = complex_set(obs, t, skeleton, params);
    } else {
      set.steps[k - 1] = {simplified_set(obs, t, params)};
    }
  }
  return set;
}

}  // namespace reachmpc
