#include "reachmpc/harness/scenario.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace reachmpc::harness {

namespace {

using nlohmann::json;

json vec3(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json statevec(const StateVec& v) {
  json a = json::array();
  for (int i = 0; i < kStateDim; ++i) a.push_back(v(i));
  return a;
}

StateVec statevec(const json& j) {
  if (!j.is_array() || j.size() != kStateDim) {
    throw std::invalid_argument("expected 10-vector");
  }
  StateVec v;
  for (int i = 0; i < kStateDim; ++i) v(i) = j[i].get<double>();
  return v;
}

}  // namespace

std::string to_string(MethodKind kind) {
  switch (kind) {
    case MethodKind::Ours: return "ours";
    case MethodKind::None: return "none";
    case MethodKind::ForwardRC: return "forward-rc";
    case MethodKind::RCSimplified: return "rc-simplified";
    case MethodKind::RCComplex: return "rc-complex";
    case MethodKind::Nav2D: return "nav2d";
    case MethodKind::DCStatic: return "dc-static";
    case MethodKind::DCConstVel: return "dc-constvel";
    case MethodKind::DCForecast: return "dc-forecast";
  }
  return "?";
}

MethodKind method_from_string(const std::string& name) {
  for (MethodKind k : all_methods()) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown method: " + name);
}

const std::vector<MethodKind>& all_methods() {
  static const std::vector<MethodKind> kAll = {
      MethodKind::Ours,       MethodKind::None,      MethodKind::ForwardRC,
      MethodKind::RCSimplified, MethodKind::RCComplex, MethodKind::Nav2D,
      MethodKind::DCStatic,   MethodKind::DCConstVel, MethodKind::DCForecast,
  };
  return kAll;
}

std::string scenario_to_json(const Scenario& sc) {
  json j;
  j["name"] = sc.name;
  j["seed"] = sc.seed;
  j["method"] = to_string(sc.method);

  const ModelParams& mp = sc.controller.model;
  j["model"] = {{"g", mp.g},   {"c_x", mp.c_x}, {"c_y", mp.c_y}, {"c_z", mp.c_z},
                {"b1", mp.b1}, {"b2", mp.b2},   {"b3", mp.b3},   {"b4", mp.b4},
                {"Ts", mp.Ts}};

  const ControllerConfig& c = sc.controller;
  json jc;
  jc["T"] = c.T;
  jc["Ts"] = c.Ts;
  jc["q_diag"] = statevec(c.q_diag);
  jc["q_terminal"] = statevec(c.q_terminal);
  jc["r_diag"] = vec3(c.r_diag);
  jc["lambda"] = c.lambda;
  jc["epsilon"] = c.epsilon;
  jc["u_min"] = vec3(c.bounds.u_min);
  jc["u_max"] = vec3(c.bounds.u_max);
  jc["x_min"] = statevec(c.x_min);
  jc["x_max"] = statevec(c.x_max);
  jc["mode"] = c.mode == ControllerConfig::Mode::Setpoint ? "setpoint" : "visual-servo";
  jc["servo_distance"] = c.servo_distance;
  jc["yaw_gain"] = c.yaw_gain;
  switch (c.forecaster.kind) {
    case ForecasterKind::Static: jc["forecaster"] = "static"; break;
    case ForecasterKind::ConstantVelocity: jc["forecaster"] = "constant-velocity"; break;
    case ForecasterKind::External: jc["forecaster"] = "external"; break;
  }
  jc["forecaster_history"] = c.forecaster.history;
  const HumanReachParams& r = c.reach;
  jc["reach"] = {{"rho_head", r.rho_head},   {"rho_torso", r.rho_torso},
                 {"rho_arm", r.rho_arm},     {"rho_hand", r.rho_hand},
                 {"v_max", r.v_max},         {"a_max", r.a_max},
                 {"R_mav", r.R_mav},         {"arm_span", r.arm_span},
                 {"t_switch", r.t_switch},   {"staleness_cap", r.staleness_cap}};
  j["controller"] = jc;

  const MavState& s = sc.x0;
  j["x0"] = {{"p", vec3(s.p)},          {"v", vec3(s.v)},
             {"theta", s.theta},        {"theta_dot", s.theta_dot},
             {"phi", s.phi},            {"phi_dot", s.phi_dot},
             {"yaw", s.yaw}};
  if (sc.goal.has_value()) j["goal"] = vec3(*sc.goal);

  j["humans"] = json::array();
  for (const auto& h : sc.humans) {
    json jh;
    if (h.synthetic.has_value()) {
      jh["synthetic"] = {{"speed", h.synthetic->speed},
                         {"heading", h.synthetic->heading},
                         {"duration", h.synthetic->duration},
                         {"rate", h.synthetic->rate},
                         {"seed", h.synthetic->seed}};
    } else {
      jh["csv"] = h.csv_path;
    }
    jh["offset"] = vec3(h.offset);
    jh["yaw"] = h.yaw;
    j["humans"].push_back(jh);
  }
  j["disturbance_std"] = sc.disturbance_std;
  j["dropout_prob"] = sc.dropout_prob;
  j["latency"] = sc.latency;
  j["timeout"] = sc.timeout;
  return j.dump(2);
}

Scenario scenario_from_json(const std::string& text) {
  const json j = json::parse(text);
  Scenario sc;
  sc.name = j.value("name", std::string("scenario"));
  sc.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("method")) sc.method = method_from_string(j["method"].get<std::string>());

  if (j.contains("model")) {
    const json& m = j["model"];
    ModelParams& mp = sc.controller.model;
    mp.g = m.value("g", mp.g);
    mp.c_x = m.value("c_x", mp.c_x);
    mp.c_y = m.value("c_y", mp.c_y);
    mp.c_z = m.value("c_z", mp.c_z);
    mp.b1 = m.value("b1", mp.b1);
    mp.b2 = m.value("b2", mp.b2);
    mp.b3 = m.value("b3", mp.b3);
    mp.b4 = m.value("b4", mp.b4);
    mp.Ts = m.value("Ts", mp.Ts);
  }
  if (j.contains("controller")) {
    const json& c = j["controller"];
    ControllerConfig& cc = sc.controller;
    cc.T = c.value("T", cc.T);
    cc.Ts = c.value("Ts", cc.Ts);
    if (c.contains("q_diag")) cc.q_diag = statevec(c["q_diag"]);
    if (c.contains("q_terminal")) cc.q_terminal = statevec(c["q_terminal"]);
    if (c.contains("r_diag")) cc.r_diag = vec3(c["r_diag"]);
    cc.lambda = c.value("lambda", cc.lambda);
    cc.epsilon = c.value("epsilon", cc.epsilon);
    if (c.contains("u_min")) cc.bounds.u_min = vec3(c["u_min"]);
    if (c.contains("u_max")) cc.bounds.u_max = vec3(c["u_max"]);
    if (c.contains("x_min")) cc.x_min = statevec(c["x_min"]);
    if (c.contains("x_max")) cc.x_max = statevec(c["x_max"]);
    if (c.contains("mode")) {
      const std::string mode = c["mode"].get<std::string>();
      if (mode == "setpoint") {
        cc.mode = ControllerConfig::Mode::Setpoint;
      } else if (mode == "visual-servo") {
        cc.mode = ControllerConfig::Mode::VisualServo;
      } else {
        throw std::invalid_argument("unknown controller mode: " + mode);
      }
    }
    cc.servo_distance = c.value("servo_distance", cc.servo_distance);
    cc.yaw_gain = c.value("yaw_gain", cc.yaw_gain);
    if (c.contains("forecaster")) {
      const std::string f = c["forecaster"].get<std::string>();
      if (f == "static") {
        cc.forecaster.kind = ForecasterKind::Static;
      } else if (f == "constant-velocity") {
        cc.forecaster.kind = ForecasterKind::ConstantVelocity;
      } else if (f == "external") {
        cc.forecaster.kind = ForecasterKind::External;
      } else {
        throw std::invalid_argument("unknown forecaster: " + f);
      }
    }
    cc.forecaster.history = c.value("forecaster_history", cc.forecaster.history);
    if (c.contains("reach")) {
      const json& r = c["reach"];
      HumanReachParams& rp = cc.reach;
      rp.rho_head = r.value("rho_head", rp.rho_head);
      rp.rho_torso = r.value("rho_torso", rp.rho_torso);
      rp.rho_arm = r.value("rho_arm", rp.rho_arm);
      rp.rho_hand = r.value("rho_hand", rp.rho_hand);
      rp.v_max = r.value("v_max", rp.v_max);
      rp.a_max = r.value("a_max", rp.a_max);
      rp.R_mav = r.value("R_mav", rp.R_mav);
      rp.arm_span = r.value("arm_span", rp.arm_span);
      rp.t_switch = r.value("t_switch", rp.t_switch);
      rp.staleness_cap = r.value("staleness_cap", rp.staleness_cap);
    }
  }
  if (j.contains("x0")) {
    const json& s = j["x0"];
    if (s.contains("p")) sc.x0.p = vec3(s["p"]);
    if (s.contains("v")) sc.x0.v = vec3(s["v"]);
    sc.x0.theta = s.value("theta", 0.0);
    sc.x0.theta_dot = s.value("theta_dot", 0.0);
    sc.x0.phi = s.value("phi", 0.0);
    sc.x0.phi_dot = s.value("phi_dot", 0.0);
    sc.x0.yaw = s.value("yaw", 0.0);
  }
  if (j.contains("goal")) sc.goal = vec3(j["goal"]);
  if (j.contains("humans")) {
    for (const auto& jh : j["humans"]) {
      HumanSpec h;
      if (jh.contains("synthetic")) {
        const json& sw = jh["synthetic"];
        SyntheticWalker w;
        w.speed = sw.value("speed", w.speed);
        w.heading = sw.value("heading", w.heading);
        w.duration = sw.value("duration", w.duration);
        w.rate = sw.value("rate", w.rate);
        w.seed = sw.value("seed", w.seed);
        h.synthetic = w;
      } else if (jh.contains("csv")) {
        h.csv_path = jh["csv"].get<std::string>();
      } else {
        throw std::invalid_argument("human spec needs 'synthetic' or 'csv'");
      }
      if (jh.contains("offset")) h.offset = vec3(jh["offset"]);
      h.yaw = jh.value("yaw", 0.0);
      sc.humans.push_back(h);
    }
  }
  sc.disturbance_std = j.value("disturbance_std", 0.0);
  sc.dropout_prob = j.value("dropout_prob", 0.0);
  sc.latency = j.value("latency", 0.0);
  sc.timeout = j.value("timeout", 30.0);
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return scenario_from_json(ss.str());
}

void save_scenario(const Scenario& sc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write scenario: " + path);
  out << scenario_to_json(sc) << "\n";
}

JointTrajectory load_human(const HumanSpec& spec) {
  JointTrajectory traj;
  if (spec.synthetic.has_value()) {
    const SyntheticWalker& w = *spec.synthetic;
    traj = synth_walk(w.speed, w.heading, w.duration, w.rate, w.seed);
  } else {
    traj = load_trajectory(spec.csv_path);
  }
  if (spec.offset.isZero(0.0) && spec.yaw == 0.0) return traj;
  return transform_trajectory(traj, spec.offset, spec.yaw);
}

}  // namespace reachmpc::harness
