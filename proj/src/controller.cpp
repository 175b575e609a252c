#include "reachmpc/controller.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace reachmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double wrap_angle(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a < -M_PI) a += 2.0 * M_PI;
  return a;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

ControllerConfig ControllerConfig::defaults() {
  ControllerConfig c;
  c.q_diag << 10, 10, 10, 1, 1, 1, 0.1, 0.01, 0.1, 0.01;
  c.q_terminal = 5.0 * c.q_diag;
  const double ang = 15.0 * M_PI / 180.0;
  c.x_min << -kInf, -kInf, 0.2, -3, -3, -3, -ang, -kInf, -ang, -kInf;
  c.x_max << kInf, kInf, kInf, 3, 3, 3, ang, kInf, ang, kInf;
  return c;
}

Eigen::VectorXd Reference::stacked() const {
  Eigen::VectorXd v(x_hat.size());
  for (int k = 0; k < x_hat.cols(); ++k) {
    v.segment(k * x_hat.rows(), x_hat.rows()) = x_hat.col(k);
  }
  return v;
}

void condense(const StackedDynamics& stacked, const Eigen::VectorXd& q_stacked,
              const Eigen::VectorXd& r_stacked, Eigen::MatrixXd& H,
              Eigen::MatrixXd& QGamma) {
  if (q_stacked.size() != stacked.Gamma.rows() || r_stacked.size() != stacked.Gamma.cols()) {
    throw std::invalid_argument("condense: weight dimension mismatch");
  }
  QGamma = q_stacked.asDiagonal() * stacked.Gamma;
  H = stacked.Gamma.transpose() * QGamma;
  H.diagonal() += r_stacked;
  H = 0.5 * (H + H.transpose());  // enforce exact symmetry
}

Eigen::VectorXd condense_gradient(const Eigen::MatrixXd& QGamma,
                                  const StackedDynamics& stacked, const Eigen::VectorXd& x0,
                                  const Eigen::VectorXd& xhat_stacked) {
  return QGamma.transpose() * (stacked.Phi * x0 - xhat_stacked);
}

namespace {

double dare_residual(const Eigen::MatrixXd& P, const Eigen::MatrixXd& A,
                     const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                     const Eigen::MatrixXd& R) {
  const Eigen::MatrixXd BtPB = R + B.transpose() * P * B;
  const Eigen::MatrixXd K = BtPB.ldlt().solve(B.transpose() * P * A);
  const Eigen::MatrixXd next =
      Q + A.transpose() * P * A - A.transpose() * P * B * K;
  return (next - P).cwiseAbs().maxCoeff() / (1.0 + P.cwiseAbs().maxCoeff());
}

}  // namespace

Eigen::MatrixXd solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           const Eigen::VectorXd& q_diag, const Eigen::VectorXd& r_diag) {
  const int n = static_cast<int>(A.rows());
  const Eigen::MatrixXd Q = q_diag.asDiagonal();
  const Eigen::MatrixXd R = r_diag.asDiagonal();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);

  // Structured doubling: Ak, Gk, Hk with Hk -> P quadratically.
  Eigen::MatrixXd Ak = A;
  Eigen::MatrixXd Gk = B * R.ldlt().solve(B.transpose().eval());
  Eigen::MatrixXd Hk = Q;
  for (int iter = 0; iter < 60; ++iter) {
    const Eigen::MatrixXd W = I + Gk * Hk;
    const Eigen::PartialPivLU<Eigen::MatrixXd> Wlu(W);
    const Eigen::MatrixXd WiA = Wlu.solve(Ak);
    const Eigen::MatrixXd WiG = Wlu.solve(Gk);
    const Eigen::MatrixXd Hnext = Hk + Ak.transpose() * Hk * WiA;
    const Eigen::MatrixXd Gnext = Gk + Ak * WiG * Ak.transpose();
    const Eigen::MatrixXd Anext = Ak * WiA;
    const double delta = (Hnext - Hk).cwiseAbs().maxCoeff();
    Ak = Anext;
    Gk = Gnext;
    Hk = 0.5 * (Hnext + Hnext.transpose());
    if (delta < 1e-12 * (1.0 + Hk.cwiseAbs().maxCoeff())) break;
  }
  if (dare_residual(Hk, A, B, Q, R) < 1e-8) return Hk;

  // Fallback: plain Riccati fixed point.
  Eigen::MatrixXd P = Q;
  for (int iter = 0; iter < 200000; ++iter) {
    const Eigen::MatrixXd BtPB = R + B.transpose() * P * B;
    const Eigen::MatrixXd K = BtPB.ldlt().solve(B.transpose() * P * A);
    const Eigen::MatrixXd next = Q + A.transpose() * P * A - A.transpose() * P * B * K;
    const double delta = (next - P).cwiseAbs().maxCoeff();
    P = 0.5 * (next + next.transpose());
    if (delta < 1e-11 * (1.0 + P.cwiseAbs().maxCoeff())) break;
  }
  return P;
}

Controller::Controller(ControllerConfig cfg)
    : cfg_(std::move(cfg)),
      model_(build_model(cfg_.model)),
      stacked_(stack(model_, cfg_.T)),
      table_(MavReachTable::build(stacked_, cfg_.bounds)),
      skeleton_(SkeletonMap::standard()) {
  const int T = cfg_.T;
  // Qbar * Gamma with either the diagonal terminal weight or the Riccati
  // cost-to-go; the latter keeps short horizons well damped on the weakly
  // actuated attitude axes.
  QGamma_ = cfg_.q_diag.replicate(T, 1).asDiagonal() * stacked_.Gamma;
  if (cfg_.lqr_terminal) {
    const Eigen::MatrixXd P =
        solve_dare(model_.A, model_.B, cfg_.q_diag, cfg_.r_diag);
    QGamma_.bottomRows(kStateDim) = P * stacked_.Gamma.bottomRows(kStateDim);
  } else {
    QGamma_.bottomRows(kStateDim) =
        cfg_.q_terminal.asDiagonal() * stacked_.Gamma.bottomRows(kStateDim);
  }
  H_ = stacked_.Gamma.transpose() * QGamma_;
  for (int k = 0; k < T; ++k) {
    H_.diagonal().segment<kInputDim>(k * kInputDim) += cfg_.r_diag;
  }
  H_ = 0.5 * (H_ + H_.transpose());

  u_lb_.resize(kInputDim * T);
  u_ub_.resize(kInputDim * T);
  for (int k = 0; k < T; ++k) {
    u_lb_.segment<kInputDim>(k * kInputDim) = cfg_.bounds.u_min;
    u_ub_.segment<kInputDim>(k * kInputDim) = cfg_.bounds.u_max;
  }

  // State box rows over u: one per finite bound per step.
  std::vector<int> upper_idx, lower_idx;
  for (int s = 0; s < kStateDim; ++s) {
    if (cfg_.x_max(s) < kInf) upper_idx.push_back(s);
    if (cfg_.x_min(s) > -kInf) lower_idx.push_back(s);
  }
  const int rows_per_step = static_cast<int>(upper_idx.size() + lower_idx.size());
  state_A_.setZero(rows_per_step * T, kInputDim * T);
  state_P_.setZero(rows_per_step * T, kStateDim);
  state_c_.setZero(rows_per_step * T);
  int r = 0;
  for (int k = 1; k <= T; ++k) {
    for (int s : upper_idx) {  // -Gamma_row u >= Phi_row x0 - xmax
      state_A_.row(r) = -stacked_.Gamma.row(kStateDim * (k - 1) + s);
      state_P_.row(r) = stacked_.Phi.row(kStateDim * (k - 1) + s);
      state_c_(r) = -cfg_.x_max(s);
      ++r;
    }
    for (int s : lower_idx) {  // Gamma_row u >= xmin - Phi_row x0
      state_A_.row(r) = stacked_.Gamma.row(kStateDim * (k - 1) + s);
      state_P_.row(r) = -stacked_.Phi.row(kStateDim * (k - 1) + s);
      state_c_(r) = cfg_.x_min(s);
      ++r;
    }
  }
  // Worst case of each row over the input box; rows that hold even there can
  // never activate and are dropped per step.
  state_min_lhs_.resize(state_A_.rows());
  for (int i = 0; i < state_A_.rows(); ++i) {
    double lo = 0.0;
    for (int jv = 0; jv < state_A_.cols(); ++jv) {
      lo += std::min(state_A_(i, jv) * u_lb_(jv), state_A_(i, jv) * u_ub_(jv));
    }
    state_min_lhs_(i) = lo;
  }
}

void Controller::reset() {
  warm_.reset();
  prev_positions_.clear();
  last_facing_ = Eigen::Vector3d(1.0, 0.0, 0.0);
}

Reference Controller::setpoint_reference(const Eigen::Vector3d& goal) const {
  if (!goal.allFinite()) throw std::invalid_argument("setpoint_reference: non-finite goal");
  Reference ref;
  ref.x_hat.setZero(kStateDim, cfg_.T);
  for (int k = 0; k < cfg_.T; ++k) ref.x_hat.col(k).head<3>() = goal;
  return ref;
}

Reference Controller::servo_reference(const std::vector<HumanFrame>& forecast_frames) {
  if (static_cast<int>(forecast_frames.size()) < cfg_.T) {
    throw std::invalid_argument("servo_reference: forecast shorter than horizon");
  }
  Reference ref;
  ref.x_hat.setZero(kStateDim, cfg_.T);
  for (int k = 0; k < cfg_.T; ++k) {
    const HumanFrame& f = forecast_frames[k];
    const Eigen::Vector3d root = f.joints[joint::pelvis];
    const Eigen::Vector3d shoulder_line =
        f.joints[joint::left_shoulder] - f.joints[joint::right_shoulder];
    Eigen::Vector3d facing = shoulder_line.cross(Eigen::Vector3d::UnitZ());
    if (facing.norm() < 1e-9) {
      facing = last_facing_;
    } else {
      facing.normalize();
      last_facing_ = facing;
    }
    Eigen::Vector3d target = root + cfg_.servo_distance * facing;
    target.z() = f.joints[joint::head].z();
    ref.x_hat.col(k).head<3>() = target;
  }
  return ref;
}

QuadraticProgram Controller::assemble(const StateVec& x0, const Reference& ref,
                                      const std::vector<ConstraintRow>& u0_rows,
                                      const Eigen::MatrixXd* extra_A,
                                      const Eigen::VectorXd* extra_b,
                                      const Eigen::Vector3d* soft_grad,
                                      bool include_state_rows) const {
  const int nv = kInputDim * cfg_.T;
  QuadraticProgram qp;
  qp.H = H_;
  qp.g = condense_gradient(QGamma_, stacked_, x0, ref.stacked());
  if (soft_grad != nullptr) qp.g.head<3>() += *soft_grad;
  qp.lb = u_lb_;
  qp.ub = u_ub_;

  // A row whose worst case over the input box still satisfies it can never
  // become active; dropping it is exact and keeps the working problem small.
  std::vector<int> state_keep;
  Eigen::VectorXd state_b;
  if (include_state_rows && state_A_.rows() > 0) {
    state_b = state_c_ + state_P_ * x0;
    for (int i = 0; i < state_A_.rows(); ++i) {
      if (state_min_lhs_(i) < state_b(i)) state_keep.push_back(i);
    }
  }
  std::vector<int> extra_keep;
  if (extra_A != nullptr) {
    for (int i = 0; i < extra_A->rows(); ++i) {
      double lo = 0.0;
      for (int jv = 0; jv < nv; ++jv) {
        lo += std::min((*extra_A)(i, jv) * u_lb_(jv), (*extra_A)(i, jv) * u_ub_(jv));
      }
      if (lo < (*extra_b)(i)) extra_keep.push_back(i);
    }
  }
  std::vector<int> u0_keep;
  for (size_t i = 0; i < u0_rows.size(); ++i) {
    double lo = 0.0;
    for (int c = 0; c < 3; ++c) {
      lo += std::min(u0_rows[i].a(c) * cfg_.bounds.u_min(c),
                     u0_rows[i].a(c) * cfg_.bounds.u_max(c));
    }
    if (lo < u0_rows[i].b) u0_keep.push_back(static_cast<int>(i));
  }
  // Same-direction dominance: near-parallel rows (frequent across
  // consecutive steps against the same primitive) reduce to the single
  // tightest one. The cone half-angle of ~1.4e-3 rad trades at most ~1 mm
  // of the 10 mm safety margin for a non-degenerate active set.
  {
    std::vector<int> reduced;
    std::vector<int> degenerate;
    std::vector<Eigen::Vector3d> dirs;
    std::vector<double> rhs;
    for (int idx : u0_keep) {
      const double norm = u0_rows[idx].a.norm();
      if (norm < 1e-14) {
        if (u0_rows[idx].b > 0.0) degenerate.push_back(idx);  // keep: infeasible row
        continue;
      }
      const Eigen::Vector3d dir = u0_rows[idx].a / norm;
      const double r = u0_rows[idx].b / norm;
      bool merged = false;
      for (size_t d = 0; d < dirs.size(); ++d) {
        if (dir.dot(dirs[d]) > 1.0 - 1e-6) {
          if (r > rhs[d]) {
            rhs[d] = r;
            reduced[d] = idx;
          }
          merged = true;
          break;
        }
      }
      if (!merged) {
        dirs.push_back(dir);
        rhs.push_back(r);
        reduced.push_back(idx);
      }
    }
    reduced.insert(reduced.end(), degenerate.begin(), degenerate.end());
    u0_keep = std::move(reduced);
  }

  const int n_u0 = static_cast<int>(u0_keep.size());
  const int n_extra = static_cast<int>(extra_keep.size());
  const int n_state = static_cast<int>(state_keep.size());
  qp.A_ineq.setZero(n_u0 + n_extra + n_state, nv);
  qp.b_ineq.resize(n_u0 + n_extra + n_state);
  for (int i = 0; i < n_u0; ++i) {
    qp.A_ineq.row(i).head<3>() = u0_rows[u0_keep[i]].a.transpose();
    qp.b_ineq(i) = u0_rows[u0_keep[i]].b;
  }
  for (int i = 0; i < n_extra; ++i) {
    qp.A_ineq.row(n_u0 + i) = extra_A->row(extra_keep[i]);
    qp.b_ineq(n_u0 + i) = (*extra_b)(extra_keep[i]);
  }
  for (int i = 0; i < n_state; ++i) {
    qp.A_ineq.row(n_u0 + n_extra + i) = state_A_.row(state_keep[i]);
    qp.b_ineq(n_u0 + n_extra + i) = state_b(state_keep[i]);
  }
  return qp;
}

ConstraintPlan Controller::default_rows(const StepContext& ctx) {
  ConstraintPlan plan;
  const auto& cfg = *ctx.cfg;
  int h = 0;
  for (const auto& obs : *ctx.observations) {
    const HumanReachableSet hset =
        hybrid_set(obs, cfg.T, cfg.Ts, *ctx.skeleton, cfg.reach);
    auto rows = build_rows(ctx.x0, *ctx.table, hset, cfg.epsilon, h * 100);
    plan.u0_rows.insert(plan.u0_rows.end(), rows.begin(), rows.end());
    ++h;
  }
  return plan;
}

PlanResult Controller::step(const MavState& x0, double now,
                            const std::vector<std::vector<HumanFrame>>& histories,
                            const std::optional<Eigen::Vector3d>& goal,
                            const ConstraintBuilder& builder) {
  const auto t_assembly = std::chrono::steady_clock::now();
  PlanResult result;
  const StateVec xv = x0.to_vector();

  std::vector<HumanObservation> observations;
  observations.reserve(histories.size());
  for (const auto& hist : histories) {
    if (!hist.empty()) {
      observations.push_back(HumanObservation::from_history(hist, now, cfg_.reach));
    }
  }

  StepContext ctx;
  ctx.cfg = &cfg_;
  ctx.stacked = &stacked_;
  ctx.table = &table_;
  ctx.skeleton = &skeleton_;
  ctx.x0 = xv;
  ctx.now = now;
  ctx.observations = &observations;
  ctx.histories = &histories;
  ctx.previous_positions = prev_positions_.empty() ? nullptr : &prev_positions_;

  ConstraintPlan plan = builder ? builder(ctx) : default_rows(ctx);

  result.safety = check_feasible(plan.u0_rows, cfg_.bounds, cfg_.epsilon);

  // Softened row partition, used only if the hard tiers prove infeasible.
  std::vector<ConstraintRow> kept_rows;
  Eigen::Vector3d soft_grad = Eigen::Vector3d::Zero();
  {
    std::vector<ConstraintRow> violated;
    std::vector<bool> is_violated(plan.u0_rows.size(), false);
    for (int i : result.safety.violated_rows) is_violated[i] = true;
    for (size_t i = 0; i < plan.u0_rows.size(); ++i) {
      if (is_violated[i]) {
        violated.push_back(plan.u0_rows[i]);
      } else {
        kept_rows.push_back(plan.u0_rows[i]);
      }
    }
    if (violated.empty() && !plan.u0_rows.empty()) {
      violated = plan.u0_rows;  // defensive partition
      kept_rows.clear();
    }
    if (!violated.empty()) soft_grad = soften(violated, cfg_.lambda);
  }

  Reference ref;
  if (cfg_.mode == ControllerConfig::Mode::VisualServo && !histories.empty() &&
      !histories.front().empty()) {
    const ForecastResult fc = forecast(cfg_.forecaster, histories.front(), cfg_.T, cfg_.Ts);
    ref = servo_reference(fc.frames);
  } else if (goal.has_value()) {
    ref = setpoint_reference(*goal);
  } else {
    ref = setpoint_reference(x0.p);  // hold position
  }

  // Project the shifted warm start's first block onto the fresh u0 rows so
  // the main solve starts feasible (skips restoration).
  if (warm_.has_value() && !plan.u0_rows.empty()) {
    Eigen::Vector3d w0 = cfg_.bounds.clamp(warm_->head<3>());
    bool violated = false;
    for (const auto& row : plan.u0_rows) {
      if (row.a.dot(w0) < row.b - 1e-9) {
        violated = true;
        break;
      }
    }
    if (violated) {
      QuadraticProgram proj;
      proj.H = Eigen::MatrixXd::Identity(3, 3);
      proj.g = -w0;
      proj.lb = cfg_.bounds.u_min;
      proj.ub = cfg_.bounds.u_max;
      proj.A_ineq.resize(static_cast<int>(plan.u0_rows.size()), 3);
      proj.b_ineq.resize(static_cast<int>(plan.u0_rows.size()));
      for (size_t i = 0; i < plan.u0_rows.size(); ++i) {
        proj.A_ineq.row(static_cast<int>(i)) = plan.u0_rows[i].a.transpose();
        proj.b_ineq(static_cast<int>(i)) = plan.u0_rows[i].b;
      }
      const QpSolution ps = solve_qp(proj);
      if (ps.status == QpStatus::Optimal) warm_->head<3>() = ps.z;
    }
  }

  const bool have_extra = plan.extra_A.rows() > 0;
  result.assembly_time = seconds_since(t_assembly);

  const auto t_solve = std::chrono::steady_clock::now();
  QpSettings settings;
  settings.max_iter = 200 + 4 * kInputDim * cfg_.T;

  // Hard problem first; relax in stages only when the solver itself proves
  // the stage infeasible. Safety rows soften last and only partially.
  struct Tier {
    bool soft;
    bool state_rows;
    bool extra_rows;
  };
  std::vector<Tier> tiers;
  tiers.push_back({false, true, have_extra});
  tiers.push_back({false, false, have_extra});
  if (have_extra) tiers.push_back({false, false, false});
  if (!plan.u0_rows.empty()) {
    tiers.push_back({true, true, false});
    tiers.push_back({true, false, false});
  }

  bool solved = false;
  QpSolution sol;
  for (const auto& tier : tiers) {
    const std::vector<ConstraintRow>& rows_used = tier.soft ? kept_rows : plan.u0_rows;
    const QuadraticProgram qp =
        assemble(xv, ref, rows_used, tier.extra_rows ? &plan.extra_A : nullptr,
                 tier.extra_rows ? &plan.extra_b : nullptr,
                 tier.soft ? &soft_grad : nullptr, tier.state_rows);
    result.qp_rows = static_cast<int>(qp.b_ineq.size());
    sol = solve_qp(qp, warm_, settings);
    result.iterations += sol.iterations;
    if (sol.status != QpStatus::PrimalInfeasible && sol.max_violation <= 1e-5) {
      result.softened = tier.soft;
      result.state_rows_dropped = !tier.state_rows;
      result.extra_rows_dropped = have_extra && !tier.extra_rows;
      solved = true;
      break;
    }
  }
  result.solve_time = seconds_since(t_solve);

  Eigen::VectorXd z;
  if (solved) {
    result.solver_status = sol.status;
    z = sol.z;
  } else {
    result.solver_status = QpStatus::PrimalInfeasible;
    result.fallback = true;
    z = Eigen::VectorXd::Zero(kInputDim * cfg_.T);
    for (int k = 0; k < cfg_.T; ++k) {
      z.segment<kInputDim>(k * kInputDim) =
          cfg_.bounds.clamp(InputVec::Zero());
    }
  }

  const InputVec u0 = cfg_.bounds.clamp(z.head<3>());
  result.u0 = ControlInput::from_vector(u0);

  // Planned trajectory from the stacked form.
  const Eigen::VectorXd x_stack = stacked_.Phi * xv + stacked_.Gamma * z;
  result.planned.reserve(cfg_.T);
  result.planned_positions.reserve(cfg_.T);
  for (int k = 0; k < cfg_.T; ++k) {
    const StateVec xs = x_stack.segment<kStateDim>(k * kStateDim);
    result.planned.push_back(MavState::from_vector(xs, x0.yaw));
    result.planned_positions.push_back(xs.head<3>());
  }
  prev_positions_ = result.planned_positions;

  // Shifted warm start for the next step.
  Eigen::VectorXd warm(kInputDim * cfg_.T);
  warm.head(kInputDim * (cfg_.T - 1)) = z.tail(kInputDim * (cfg_.T - 1));
  warm.tail<kInputDim>() = z.tail<kInputDim>();
  warm_ = warm;

  // Yaw plumbing: face the observed human in servo mode.
  if (cfg_.mode == ControllerConfig::Mode::VisualServo && !observations.empty()) {
    const Eigen::Vector3d root = observations.front().frame.joints[joint::pelvis];
    const double bearing = std::atan2(root.y() - x0.p.y(), root.x() - x0.p.x());
    result.yaw_rate_cmd = cfg_.yaw_gain * wrap_angle(bearing - x0.yaw);
  }
  return result;
}

}  // namespace reachmpc
