#include "reachmpc/harness/runner.hpp"

#include <cmath>
#include <deque>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace reachmpc::harness {

namespace {

using nlohmann::json;

double wrap_angle(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a < -M_PI) a += 2.0 * M_PI;
  return a;
}

/// Hyperplane anchors for the linearized baselines: previous plan when
/// available, otherwise the current position.
Eigen::Vector3d anchor_at(const StepContext& ctx, int k) {
  if (ctx.previous_positions != nullptr &&
      static_cast<int>(ctx.previous_positions->size()) >= k) {
    return (*ctx.previous_positions)[k - 1];
  }
  return ctx.x0.head<3>();
}

/// Reachability rows enforced on the whole planned trajectory: one row per
/// (step, primitive) over all input blocks up to k.
ConstraintPlan forward_rc_plan(const StepContext& ctx) {
  ConstraintPlan plan;
  const auto& cfg = *ctx.cfg;
  const int T = cfg.T;
  const int nv = kInputDim * T;
  Eigen::VectorXd uc_full(nv);
  for (int k = 0; k < T; ++k) uc_full.segment<kInputDim>(k * kInputDim) = cfg.bounds.center();

  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rhs;
  for (const auto& obs : *ctx.observations) {
    const HumanReachableSet hset = hybrid_set(obs, T, cfg.Ts, *ctx.skeleton, cfg.reach);
    for (int k = 1; k <= T; ++k) {
      const Eigen::Vector3d pbar = anchor_at(ctx, k);
      const auto gamma_pos = ctx.stacked->Gamma.middleRows(kStateDim * (k - 1), 3);
      const auto phi_pos = ctx.stacked->Phi.middleRows(kStateDim * (k - 1), 3);
      for (const auto& prim : hset.steps[k - 1]) {
        const ClosestPoint cp = closest_point_normal(prim, pbar);
        const Eigen::Vector3d& n = cp.normal;
        Eigen::VectorXd row = gamma_pos.transpose() * n;
        const double b = cfg.epsilon + n.dot(cp.point) - n.dot(phi_pos * ctx.x0);
        if (row.dot(uc_full) - b > 10.0) continue;
        rows.push_back(std::move(row));
        rhs.push_back(b);
      }
    }
  }
  plan.extra_A.resize(static_cast<int>(rows.size()), nv);
  plan.extra_b.resize(static_cast<int>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    plan.extra_A.row(static_cast<int>(i)) = rows[i].transpose();
    plan.extra_b(static_cast<int>(i)) = rhs[i];
  }
  return plan;
}

/// Joint-wise minimum-distance rows linearized about the previous plan,
/// with the human model chosen by the DC variant.
ConstraintPlan dc_plan(const StepContext& ctx, MethodKind kind) {
  ConstraintPlan plan;
  const auto& cfg = *ctx.cfg;
  const int T = cfg.T;
  const int nv = kInputDim * T;
  const double min_dist = cfg.reach.R_mav;
  const double engage_range = 2.0;  // rows further out stay inactive anyway

  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rhs;
  for (size_t h = 0; h < ctx.observations->size(); ++h) {
    const HumanObservation& obs = (*ctx.observations)[h];
    // Per-step predicted joints.
    std::vector<HumanFrame> predicted;
    if (kind == MethodKind::DCStatic) {
      predicted.assign(T, obs.frame);
    } else {
      ForecasterConfig fc;
      fc.kind = ForecasterKind::ConstantVelocity;
      fc.history = (kind == MethodKind::DCConstVel) ? 2 : cfg.forecaster.history;
      if (kind == MethodKind::DCForecast) fc = cfg.forecaster;
      predicted = forecast(fc, (*ctx.histories)[h], T, cfg.Ts).frames;
    }
    for (int k = 1; k <= T; ++k) {
      const Eigen::Vector3d pbar = anchor_at(ctx, k);
      const auto gamma_pos = ctx.stacked->Gamma.middleRows(kStateDim * (k - 1), 3);
      const auto phi_pos = ctx.stacked->Phi.middleRows(kStateDim * (k - 1), 3);
      const Eigen::Vector3d phi_x0 = phi_pos * ctx.x0;
      for (int j = 0; j < kNumJoints; ++j) {
        const Eigen::Vector3d& jt = predicted[k - 1].joints[j];
        const Eigen::Vector3d d = pbar - jt;
        const double dist = d.norm();
        if (dist > min_dist + engage_range || dist < 1e-9) continue;
        const Eigen::Vector3d n = d / dist;
        Eigen::VectorXd row = gamma_pos.transpose() * n;
        const double b = min_dist + n.dot(jt) - n.dot(phi_x0);
        rows.push_back(std::move(row));
        rhs.push_back(b);
      }
    }
  }
  plan.extra_A.resize(static_cast<int>(rows.size()), nv);
  plan.extra_b.resize(static_cast<int>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    plan.extra_A.row(static_cast<int>(i)) = rows[i].transpose();
    plan.extra_b(static_cast<int>(i)) = rhs[i];
  }
  return plan;
}

ConstraintPlan rc_regime_plan(const StepContext& ctx, HumanSetRegime regime) {
  ConstraintPlan plan;
  const auto& cfg = *ctx.cfg;
  int h = 0;
  for (const auto& obs : *ctx.observations) {
    const HumanReachableSet hset =
        uniform_set(obs, cfg.T, cfg.Ts, *ctx.skeleton, cfg.reach, regime);
    auto rows = build_rows(ctx.x0, *ctx.table, hset, cfg.epsilon, h * 100);
    plan.u0_rows.insert(plan.u0_rows.end(), rows.begin(), rows.end());
    ++h;
  }
  return plan;
}

}  // namespace

ConstraintBuilder method_constraints(MethodKind kind) {
  switch (kind) {
    case MethodKind::Ours:
    case MethodKind::Nav2D:
      return {};  // controller default: hybrid-set rows on u0
    case MethodKind::None:
      return [](const StepContext&) { return ConstraintPlan{}; };
    case MethodKind::RCSimplified:
      return [](const StepContext& ctx) {
        return rc_regime_plan(ctx, HumanSetRegime::Simplified);
      };
    case MethodKind::RCComplex:
      return [](const StepContext& ctx) {
        return rc_regime_plan(ctx, HumanSetRegime::Complex);
      };
    case MethodKind::ForwardRC:
      return forward_rc_plan;
    case MethodKind::DCStatic:
    case MethodKind::DCConstVel:
    case MethodKind::DCForecast:
      return [kind](const StepContext& ctx) { return dc_plan(ctx, kind); };
  }
  return {};
}

Scenario apply_method(Scenario sc) {
  if (sc.method == MethodKind::Nav2D) {
    // Plan in the horizontal plane: freeze the thrust channel so altitude
    // holds exactly from a resting start, and put the goal at that height.
    sc.controller.bounds.u_min(0) = 0.0;
    sc.controller.bounds.u_max(0) = 0.0;
    if (sc.goal.has_value()) sc.goal->z() = sc.x0.p.z();
  }
  return sc;
}

std::pair<RunLog, Metrics> run_scenario(const Scenario& scenario) {
  const Scenario sc = apply_method(scenario);
  const ControllerConfig& cfg = sc.controller;

  Controller controller(cfg);
  const ConstraintBuilder builder = method_constraints(sc.method);
  const DiscreteModel& model = controller.model();

  std::vector<JointTrajectory> trajs;
  trajs.reserve(sc.humans.size());
  for (const auto& h : sc.humans) trajs.push_back(load_human(h));

  std::vector<ObservationPipeline> pipelines;
  const bool degrade_obs = sc.dropout_prob > 0.0 || sc.latency > 0.0;
  if (degrade_obs) {
    for (size_t h = 0; h < trajs.size(); ++h) {
      pipelines.emplace_back(sc.dropout_prob, sc.latency, sc.seed * 1000 + h);
    }
  }

  const size_t history_cap = std::max(cfg.forecaster.history, 12);
  std::vector<std::vector<HumanFrame>> histories(trajs.size());

  std::mt19937_64 dist_rng(sc.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unif(-std::sqrt(3.0), std::sqrt(3.0));

  RunLog log;
  log.meta.scenario_name = sc.name;
  log.meta.method = to_string(sc.method);
  log.meta.horizon = cfg.T;
  log.meta.n_humans = static_cast<int>(trajs.size());
  log.meta.seed = sc.seed;

  MavState state = sc.x0;
  double yaw_rate = 0.0;
  const double yaw_lag = 0.1;  // s, first-order tracking of the rate command

  const int max_steps = static_cast<int>(std::ceil(sc.timeout / cfg.Ts));
  const SkeletonMap& skeleton = controller.skeleton();

  for (int step = 0; step < max_steps; ++step) {
    const double t = step * cfg.Ts;

    // Trajectory end stops the run.
    bool trajectory_ended = false;
    for (const auto& traj : trajs) {
      if (t > traj.t_last()) trajectory_ended = true;
    }
    if (trajectory_ended) break;

    std::vector<HumanFrame> true_frames;
    true_frames.reserve(trajs.size());
    for (size_t h = 0; h < trajs.size(); ++h) {
      true_frames.push_back(sample(trajs[h], t).frame);
      HumanFrame delivered =
          degrade_obs ? pipelines[h].observe(trajs[h], t) : true_frames.back();
      auto& hist = histories[h];
      hist.push_back(delivered);
      if (hist.size() > history_cap) hist.erase(hist.begin());
    }

    PlanResult plan = controller.step(state, t, histories, sc.goal, builder);

    StepRecord rec;
    rec.t = t;
    rec.state = state.to_vector();
    rec.yaw = state.yaw;
    rec.u0 = plan.u0.to_vector();
    rec.solver_status = plan.solver_status == QpStatus::Optimal          ? 0
                        : plan.solver_status == QpStatus::MaxIterations ? 1
                                                                        : 2;
    rec.solve_ms = plan.solve_time * 1e3;
    rec.assembly_ms = plan.assembly_time * 1e3;
    rec.softened = plan.softened;
    rec.fallback = plan.fallback;
    rec.safety_rows = static_cast<int>(plan.safety.rows.size());
    rec.feasible = plan.safety.feasible_under_bounds;
    rec.violated_rows = static_cast<int>(plan.safety.violated_rows.size());
    rec.epsilon = plan.safety.epsilon;

    double min_joint = std::numeric_limits<double>::infinity();
    double min_prim = std::numeric_limits<double>::infinity();
    for (const auto& frame : true_frames) {
      for (const auto& joint : frame.joints) {
        min_joint = std::min(min_joint, (state.p - joint).norm());
      }
      HumanObservation now_obs;
      now_obs.frame = frame;
      now_obs.unobserved.fill(0.0);
      now_obs.v0.fill(0.0);
      for (const auto& prim : complex_set(now_obs, 0.0, skeleton, cfg.reach)) {
        min_prim = std::min(min_prim, signed_distance(prim, state.p));
      }
    }
    rec.min_joint_dist = min_joint;
    rec.min_prim_dist = min_prim;
    log.steps.push_back(rec);

    // Plant: nominal discrete model plus optional bounded disturbance.
    StateVec xv = model.A * state.to_vector() + model.B * plan.u0.to_vector();
    if (sc.disturbance_std > 0.0) {
      for (int i = 3; i <= 5; ++i) xv(i) += sc.disturbance_std * unif(dist_rng);
    }
    const double prev_yaw = state.yaw;
    state = MavState::from_vector(xv, prev_yaw);
    yaw_rate += (cfg.Ts / yaw_lag) * (plan.yaw_rate_cmd - yaw_rate);
    state.yaw = wrap_angle(prev_yaw + cfg.Ts * yaw_rate);

    if (sc.goal.has_value()) {
      const double perr = (state.p - *sc.goal).norm();
      if (perr < 0.2 && state.v.norm() < 0.1) {
        log.meta.reached_goal = true;
        log.meta.time_to_goal = t + cfg.Ts;
        break;
      }
    }
  }
  log.meta.duration = log.steps.empty() ? 0.0 : log.steps.back().t + cfg.Ts;

  return {log, metrics_from_log(log)};
}

Metrics metrics_from_log(const RunLog& log) {
  Metrics m;
  if (log.steps.empty()) return m;
  double solve_sum = 0.0, asm_sum = 0.0;
  for (size_t i = 0; i < log.steps.size(); ++i) {
    const StepRecord& r = log.steps[i];
    m.min_joint_distance = std::min(m.min_joint_distance, r.min_joint_dist);
    solve_sum += r.solve_ms;
    asm_sum += r.assembly_ms;
    m.max_solver_ms = std::max(m.max_solver_ms, r.solve_ms);
    m.max_assembly_ms = std::max(m.max_assembly_ms, r.assembly_ms);
    if (r.softened && i > 0) ++m.softened_after_first;
    if (r.fallback) ++m.fallback_steps;
  }
  m.mean_solver_ms = solve_sum / log.steps.size();
  m.mean_assembly_ms = asm_sum / log.steps.size();
  m.collision_avoided = m.min_joint_distance >= kCollisionThreshold;
  if (log.meta.reached_goal) m.time_to_goal = log.meta.time_to_goal;
  return m;
}

void write_runlog(const RunLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write run log: " + path);
  json meta;
  meta["scenario"] = log.meta.scenario_name;
  meta["method"] = log.meta.method;
  meta["horizon"] = log.meta.horizon;
  meta["n_humans"] = log.meta.n_humans;
  meta["seed"] = log.meta.seed;
  meta["reached_goal"] = log.meta.reached_goal;
  meta["time_to_goal"] = log.meta.time_to_goal;
  meta["duration"] = log.meta.duration;
  out << meta.dump() << "\n";
  for (const auto& r : log.steps) {
    json j;
    j["t"] = r.t;
    json st = json::array();
    for (int i = 0; i < kStateDim; ++i) st.push_back(r.state(i));
    j["state"] = st;
    j["yaw"] = r.yaw;
    j["u0"] = json::array({r.u0(0), r.u0(1), r.u0(2)});
    j["status"] = r.solver_status;
    j["solve_ms"] = r.solve_ms;
    j["assembly_ms"] = r.assembly_ms;
    j["softened"] = r.softened;
    j["fallback"] = r.fallback;
    j["min_joint_dist"] = r.min_joint_dist;
    j["min_prim_dist"] = r.min_prim_dist;
    j["safety"] = {{"rows", r.safety_rows},
                   {"feasible", r.feasible},
                   {"violated", r.violated_rows},
                   {"epsilon", r.epsilon}};
    out << j.dump() << "\n";
  }
}

RunLog read_runlog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open run log: " + path);
  RunLog log;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty run log: " + path);
  {
    const json meta = json::parse(line);
    log.meta.scenario_name = meta.value("scenario", std::string());
    log.meta.method = meta.value("method", std::string());
    log.meta.horizon = meta.value("horizon", 0);
    log.meta.n_humans = meta.value("n_humans", 0);
    log.meta.seed = meta.value("seed", std::uint64_t{0});
    log.meta.reached_goal = meta.value("reached_goal", false);
    log.meta.time_to_goal = meta.value("time_to_goal", 0.0);
    log.meta.duration = meta.value("duration", 0.0);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    StepRecord r;
    r.t = j.at("t").get<double>();
    for (int i = 0; i < kStateDim; ++i) r.state(i) = j.at("state")[i].get<double>();
    r.yaw = j.value("yaw", 0.0);
    for (int i = 0; i < 3; ++i) r.u0(i) = j.at("u0")[i].get<double>();
    r.solver_status = j.value("status", 0);
    r.solve_ms = j.value("solve_ms", 0.0);
    r.assembly_ms = j.value("assembly_ms", 0.0);
    r.softened = j.value("softened", false);
    r.fallback = j.value("fallback", false);
    r.min_joint_dist = j.value("min_joint_dist", 0.0);
    r.min_prim_dist = j.value("min_prim_dist", 0.0);
    if (j.contains("safety")) {
      r.safety_rows = j["safety"].value("rows", 0);
      r.feasible = j["safety"].value("feasible", true);
      r.violated_rows = j["safety"].value("violated", 0);
      r.epsilon = j["safety"].value("epsilon", 0.0);
    }
    log.steps.push_back(r);
  }
  return log;
}

}  // namespace reachmpc::harness
