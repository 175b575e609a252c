#include "reachmpc/dynamics.hpp"

#include <cmath>
#include <stdexcept>

#include <unsupported/Eigen/MatrixFunctions>

namespace reachmpc {

bool ModelParams::valid() const {
  const double vals[] = {g, c_x, c_y, c_z, b1, b2, b3, b4, Ts};
  for (double v : vals) {
    if (!std::isfinite(v)) return false;
  }
  return Ts > 0.0 && g >= 0.0 && c_x >= 0.0 && c_y >= 0.0 && c_z >= 0.0 && b1 >= 0.0 &&
         b3 >= 0.0;
}

StateVec MavState::to_vector() const {
  StateVec xv;
  xv << p.x(), p.y(), p.z(), v.x(), v.y(), v.z(), theta, theta_dot, phi, phi_dot;
  return xv;
}

MavState MavState::from_vector(const StateVec& xv, double yaw) {
  MavState s;
  s.p = xv.segment<3>(0);
  s.v = xv.segment<3>(3);
  s.theta = xv(idx::theta);
  s.theta_dot = xv(idx::theta_dot);
  s.phi = xv(idx::phi);
  s.phi_dot = xv(idx::phi_dot);
  s.yaw = yaw;
  return s;
}

void continuous_model(const ModelParams& p, StateMat& A, InputMat& B) {
  A.setZero();
  B.setZero();
  // Kinematics: positions integrate velocities, angles integrate rates.
  A(idx::x, idx::xd) = 1.0;
  A(idx::y, idx::yd) = 1.0;
  A(idx::z, idx::zd) = 1.0;
  A(idx::theta, idx::theta_dot) = 1.0;
  A(idx::phi, idx::phi_dot) = 1.0;
  // Translational accelerations.
  A(idx::xd, idx::theta) = p.g;
  A(idx::xd, idx::xd) = -p.c_x;
  A(idx::yd, idx::phi) = -p.g;
  A(idx::yd, idx::yd) = -p.c_y;
  A(idx::zd, idx::zd) = -p.c_z;
  B(idx::zd, 0) = 1.0;
  // Second-order attitude loops.
  A(idx::theta_dot, idx::theta) = -p.b1;
  B(idx::theta_dot, 1) = p.b2;
  A(idx::phi_dot, idx::phi) = -p.b3;
  B(idx::phi_dot, 2) = p.b4;
}

DiscreteModel build_model(const ModelParams& params) {
  if (!params.valid()) {
    throw std::invalid_argument("build_model: non-finite or out-of-range model parameters");
  }
  StateMat Ac;
  InputMat Bc;
  continuous_model(params, Ac, Bc);

  // ZOH via the matrix exponential of the augmented [Ac Bc; 0 0] system.
  constexpr int na = kStateDim + kInputDim;
  Eigen::Matrix<double, na, na> M = Eigen::Matrix<double, na, na>::Zero();
  M.topLeftCorner<kStateDim, kStateDim>() = Ac * params.Ts;
  M.topRightCorner<kStateDim, kInputDim>() = Bc * params.Ts;
  const Eigen::Matrix<double, na, na> E = M.exp();

  DiscreteModel d;
  d.A = E.topLeftCorner<kStateDim, kStateDim>();
  d.B = E.topRightCorner<kStateDim, kInputDim>();
  d.Ts = params.Ts;
  return d;
}

StackedDynamics stack_generic(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, int T) {
  if (T < 1) throw std::invalid_argument("stack: horizon must be at least 1");
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(B.cols());
  StackedDynamics s;
  s.T = T;
  s.n = n;
  s.m = m;
  s.Phi.setZero(n * T, n);
  s.Gamma.setZero(n * T, m * T);

  Eigen::MatrixXd Ak = A;  // A^k for the current block row
  for (int k = 1; k <= T; ++k) {
    s.Phi.block(n * (k - 1), 0, n, n) = Ak;
    if (k < T) Ak = A * Ak;
  }
  // Gamma block (k, j) = A^(k-1-j) B. First block column holds A^(k-1) B;
  // each later column is the previous one shifted down a block row.
  Eigen::MatrixXd AjB = B;
  for (int k = 1; k <= T; ++k) {
    s.Gamma.block(n * (k - 1), 0, n, m) = AjB;
    if (k < T) AjB = A * AjB;
  }
  for (int j = 1; j < T; ++j) {
    for (int k = j + 1; k <= T; ++k) {
      s.Gamma.block(n * (k - 1), m * j, n, m) =
          s.Gamma.block(n * (k - 1 - j), 0, n, m);
    }
  }
  return s;
}

StackedDynamics stack(const DiscreteModel& model, int T) {
  return stack_generic(model.A, model.B, T);
}

std::vector<MavState> propagate(const DiscreteModel& model, const MavState& x0,
                                const std::vector<ControlInput>& controls) {
  std::vector<MavState> out;
  out.reserve(controls.size());
  StateVec xv = x0.to_vector();
  for (const ControlInput& u : controls) {
    xv = model.A * xv + model.B * u.to_vector();
    out.push_back(MavState::from_vector(xv, x0.yaw));
  }
  return out;
}

}  // namespace reachmpc
