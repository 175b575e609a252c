#pragma once

#include <Eigen/Dense>
#include <vector>

namespace reachmpc {

/// Canonical state ordering: [x, y, z, xd, yd, zd, theta, theta_dot, phi, phi_dot].
/// Yaw is tracked kinematically outside the linear state vector.
inline constexpr int kStateDim = 10;
inline constexpr int kInputDim = 3;

namespace idx {
inline constexpr int x = 0, y = 1, z = 2;
inline constexpr int xd = 3, yd = 4, zd = 5;
inline constexpr int theta = 6, theta_dot = 7;
inline constexpr int phi = 8, phi_dot = 9;
}  // namespace idx

using StateVec = Eigen::Matrix<double, kStateDim, 1>;
using InputVec = Eigen::Matrix<double, kInputDim, 1>;
using StateMat = Eigen::Matrix<double, kStateDim, kStateDim>;
using InputMat = Eigen::Matrix<double, kStateDim, kInputDim>;

/// Identified MAV model parameters (SI units, angles in radians).
/// Default attitude-loop coefficients give unit DC gain (theta_ss = theta_r);
/// an attitude loop with a much smaller DC gain leaves the vehicle without
/// usable lateral authority inside a 1 s horizon.
struct ModelParams {
  double g = 9.81;    ///< gravitational acceleration [m/s^2]
  double c_x = 0.01;  ///< aerodynamic friction, x axis [1/s]
  double c_y = 0.01;
  double c_z = 0.01;
  double b1 = 8.0;  ///< pitch loop: theta_dd = -b1*theta + b2*theta_r
  double b2 = 8.0;
  double b3 = 8.0;  ///< roll loop: phi_dd = -b3*phi + b4*phi_r
  double b4 = 8.0;
  double Ts = 0.025;  ///< sampling time [s]

  bool valid() const;
};

/// Translational/attitude state plus separately tracked yaw.
struct MavState {
  Eigen::Vector3d p = Eigen::Vector3d::Zero();  ///< position [m]
  Eigen::Vector3d v = Eigen::Vector3d::Zero();  ///< velocity [m/s]
  double theta = 0.0;                           ///< pitch [rad]
  double theta_dot = 0.0;
  double phi = 0.0;  ///< roll [rad]
  double phi_dot = 0.0;
  double yaw = 0.0;  ///< heading [rad], excluded from the linear state

  StateVec to_vector() const;
  static MavState from_vector(const StateVec& xv, double yaw = 0.0);
};

/// Control input: mass-normalized thrust offset from hover plus attitude references.
struct ControlInput {
  double tau = 0.0;      ///< thrust offset [m/s^2]; hover is tau = 0
  double theta_r = 0.0;  ///< pitch reference [rad]
  double phi_r = 0.0;    ///< roll reference [rad]

  InputVec to_vector() const { return InputVec(tau, theta_r, phi_r); }
  static ControlInput from_vector(const InputVec& u) { return {u(0), u(1), u(2)}; }
};

/// Componentwise control box.
struct ControlBounds {
  InputVec u_min{-0.5, -0.2617993877991494, -0.2617993877991494};
  InputVec u_max{0.25, 0.2617993877991494, 0.2617993877991494};

  InputVec center() const { return 0.5 * (u_max + u_min); }
  InputVec half_width() const { return 0.5 * (u_max - u_min); }
  InputVec clamp(const InputVec& u) const { return u.cwiseMax(u_min).cwiseMin(u_max); }
};

/// Exact zero-order-hold discretization of the continuous model.
struct DiscreteModel {
  StateMat A;
  InputMat B;
  double Ts = 0.0;
};

/// Stacked prediction matrices over a horizon of T steps.
/// Row-block k (1-based) of Phi is A^k; Gamma block (k, j) is A^(k-1-j)*B for j < k.
struct StackedDynamics {
  Eigen::MatrixXd Phi;    ///< (n*T) x n
  Eigen::MatrixXd Gamma;  ///< (n*T) x (m*T)
  int T = 0;
  int n = 0;
  int m = 0;

  /// Rows of the k-th block (k in 1..T).
  Eigen::Block<const Eigen::MatrixXd> phi_block(int k) const {
    return Phi.block(n * (k - 1), 0, n, n);
  }
  Eigen::Block<const Eigen::MatrixXd> gamma_block(int k, int j) const {
    return Gamma.block(n * (k - 1), m * j, n, m);
  }
};

/// Continuous-time matrices assembled from the second-order model.
void continuous_model(const ModelParams& params, StateMat& A, InputMat& B);

/// Exact ZOH discretization (matrix exponential of the augmented system).
/// Throws std::invalid_argument on non-finite or out-of-range parameters.
DiscreteModel build_model(const ModelParams& params);

/// Stacked prediction form. Throws std::invalid_argument when T == 0.
StackedDynamics stack(const DiscreteModel& model, int T);

/// Generic stacked form for arbitrary (A, B); used by the condensation path.
StackedDynamics stack_generic(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, int T);

/// Step-by-step rollout; returns one state per control, x0 excluded.
std::vector<MavState> propagate(const DiscreteModel& model, const MavState& x0,
                                const std::vector<ControlInput>& controls);

}  // namespace reachmpc
