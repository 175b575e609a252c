#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "reachmpc/dynamics.hpp"
#include "reachmpc/human_reach.hpp"
#include "reachmpc/humans.hpp"
#include "reachmpc/qp.hpp"
#include "reachmpc/safety.hpp"

namespace reachmpc {

struct ControllerConfig {
  int T = 40;
  double Ts = 0.025;
  StateVec q_diag;
  StateVec q_terminal;        ///< diagonal terminal weight, used when !lqr_terminal
  bool lqr_terminal = true;   ///< terminal cost from the Riccati cost-to-go
  InputVec r_diag{1.0, 1.0, 1.0};
  double lambda = 1000.0;   ///< softening weight
  double epsilon = 0.01;    ///< safety margin [m]
  ControlBounds bounds;
  StateVec x_min;
  StateVec x_max;
  enum class Mode { Setpoint, VisualServo };
  Mode mode = Mode::Setpoint;
  double servo_distance = 3.0;
  ForecasterConfig forecaster;
  double yaw_gain = 2.0;  ///< [1/s]
  ModelParams model;
  HumanReachParams reach;

  static ControllerConfig defaults();
};

/// Stacked per-step reference states (one column per horizon step).
struct Reference {
  Eigen::MatrixXd x_hat;  ///< kStateDim x T

  Eigen::VectorXd stacked() const;
};

struct PlanResult {
  ControlInput u0;
  std::vector<MavState> planned;
  std::vector<Eigen::Vector3d> planned_positions;
  QpStatus solver_status = QpStatus::Optimal;
  double solve_time = 0.0;     ///< seconds
  double assembly_time = 0.0;  ///< seconds, includes reachable-set construction
  bool softened = false;
  bool fallback = false;
  bool state_rows_dropped = false;
  bool extra_rows_dropped = false;
  int iterations = 0;
  int qp_rows = 0;
  SafetyReport safety;
  double yaw_rate_cmd = 0.0;
};

/// Constraints supplied per control step: safety rows on u0 plus optional
/// rows over the full input sequence (used by the baseline methods).
struct ConstraintPlan {
  std::vector<ConstraintRow> u0_rows;
  Eigen::MatrixXd extra_A;  ///< rows x 3T, may be empty
  Eigen::VectorXd extra_b;
};

struct StepContext {
  const ControllerConfig* cfg = nullptr;
  const StackedDynamics* stacked = nullptr;
  const MavReachTable* table = nullptr;
  const SkeletonMap* skeleton = nullptr;
  StateVec x0;
  double now = 0.0;
  const std::vector<HumanObservation>* observations = nullptr;
  const std::vector<std::vector<HumanFrame>>* histories = nullptr;
  const std::vector<Eigen::Vector3d>* previous_positions = nullptr;
};

using ConstraintBuilder = std::function<ConstraintPlan(const StepContext&)>;

/// Condensed objective pieces: H = Gamma' Qbar Gamma + Rbar and the
/// Qbar*Gamma factor reused for the per-step gradient.
void condense(const StackedDynamics& stacked, const Eigen::VectorXd& q_stacked,
              const Eigen::VectorXd& r_stacked, Eigen::MatrixXd& H,
              Eigen::MatrixXd& QGamma);

Eigen::VectorXd condense_gradient(const Eigen::MatrixXd& QGamma,
                                  const StackedDynamics& stacked, const Eigen::VectorXd& x0,
                                  const Eigen::VectorXd& xhat_stacked);

/// Stabilizing solution of the discrete algebraic Riccati equation via the
/// structured doubling iteration, with a fixed-point fallback.
Eigen::MatrixXd solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           const Eigen::VectorXd& q_diag, const Eigen::VectorXd& r_diag);

class Controller {
 public:
  explicit Controller(ControllerConfig cfg);

  const ControllerConfig& config() const { return cfg_; }
  const DiscreteModel& model() const { return model_; }
  const StackedDynamics& stacked() const { return stacked_; }
  const MavReachTable& reach_table() const { return table_; }
  const SkeletonMap& skeleton() const { return skeleton_; }

  Reference setpoint_reference(const Eigen::Vector3d& goal) const;

  /// Per-step target: front offset from the forecast root along the facing
  /// direction, at forecast head height. Coincident shoulders reuse the
  /// previous facing.
  Reference servo_reference(const std::vector<HumanFrame>& forecast_frames);

  QuadraticProgram assemble(const StateVec& x0, const Reference& ref,
                            const std::vector<ConstraintRow>& u0_rows,
                            const Eigen::MatrixXd* extra_A, const Eigen::VectorXd* extra_b,
                            const Eigen::Vector3d* soft_grad, bool include_state_rows) const;

  /// Full control step: observations and safety rows from current joints
  /// only, reference from the forecaster, feasibility check, hard or
  /// softened solve. Never throws past assembly; falls back to a clamped
  /// zero input if every solve tier fails.
  PlanResult step(const MavState& x0, double now,
                  const std::vector<std::vector<HumanFrame>>& histories,
                  const std::optional<Eigen::Vector3d>& goal,
                  const ConstraintBuilder& builder = {});

  /// Hybrid-set safety rows; the default constraint path.
  static ConstraintPlan default_rows(const StepContext& ctx);

  /// Shifted warm start carried between steps (diagnostics).
  const std::optional<Eigen::VectorXd>& warm_start() const { return warm_; }

  void reset();

 private:
  ControllerConfig cfg_;
  DiscreteModel model_;
  StackedDynamics stacked_;
  MavReachTable table_;
  SkeletonMap skeleton_;
  Eigen::MatrixXd H_;
  Eigen::MatrixXd QGamma_;
  Eigen::MatrixXd state_A_;
  Eigen::MatrixXd state_P_;
  Eigen::VectorXd state_c_;
  Eigen::VectorXd state_min_lhs_;  ///< min over the input box of each state row
  Eigen::VectorXd u_lb_;
  Eigen::VectorXd u_ub_;
  Eigen::Vector3d last_facing_{1.0, 0.0, 0.0};
  std::optional<Eigen::VectorXd> warm_;
  std::vector<Eigen::Vector3d> prev_positions_;
};

}  // namespace reachmpc
