#include "reachmpc/reach.hpp"

#include <algorithm>
#include <stdexcept>

namespace reachmpc {

namespace {

// Position rows of the canonical state ordering.
Eigen::Matrix<double, 3, kStateDim> position_selector() {
  Eigen::Matrix<double, 3, kStateDim> P = Eigen::Matrix<double, 3, kStateDim>::Zero();
  P(0, idx::x) = 1.0;
  P(1, idx::y) = 1.0;
  P(2, idx::z) = 1.0;
  return P;
}

}  // namespace

Zonotope mav_reachable(const StackedDynamics& stacked, const StateVec& x0,
                       const InputVec& u0, const ControlBounds& bounds, int k) {
  if (k < 1 || k > stacked.T) {
    throw std::invalid_argument("mav_reachable: step k outside 1..T");
  }
  const auto P = position_selector();
  const InputVec uc = bounds.center();
  const InputVec hw = bounds.half_width();

  Eigen::Vector3d c = P * (stacked.phi_block(k) * x0) + P * (stacked.gamma_block(k, 0) * u0);
  std::vector<Eigen::Vector3d> cols;
  cols.reserve(3 * (k - 1));
  for (int j = 1; j < k; ++j) {
    const Eigen::Matrix<double, 3, kInputDim> Gpos =
        P * stacked.gamma_block(k, j);
    c += Gpos * uc;
    for (int col = 0; col < kInputDim; ++col) {
      const Eigen::Vector3d g = Gpos.col(col) * hw(col);
      if (!g.isZero(0.0)) cols.push_back(g);
    }
  }
  Zonotope z;
  z.c = c;
  z.G.resize(3, static_cast<int>(cols.size()));
  for (size_t i = 0; i < cols.size(); ++i) z.G.col(static_cast<int>(i)) = cols[i];
  return z;
}

double set_distance(const Zonotope& z, const ReachPrimitive& prim) {
  if (z.dim() != 3) throw std::invalid_argument("set_distance: zonotope must be 3D");
  const Eigen::Vector3d c = z.c;
  const ClosestPoint cp = closest_point_normal(prim, c);
  double ext = 0.0;
  if (z.num_generators() > 0) {
    ext = (z.G.transpose() * cp.normal).lpNorm<1>();
  }
  if (cp.signed_distance >= 0.0) {
    return std::max(0.0, cp.signed_distance - ext);
  }
  return std::min(0.0, cp.signed_distance + ext);
}

MavReachTable MavReachTable::build(const StackedDynamics& stacked,
                                   const ControlBounds& bounds) {
  const auto P = position_selector();
  const InputVec uc = bounds.center();
  const InputVec hw = bounds.half_width();

  MavReachTable t;
  t.bounds = bounds;
  t.T = stacked.T;
  t.phi_pos.resize(stacked.T);
  t.gamma0_pos.resize(stacked.T);
  t.gen_pos.resize(stacked.T);
  t.tail_center.resize(stacked.T);
  for (int k = 1; k <= stacked.T; ++k) {
    t.phi_pos[k - 1] = P * stacked.phi_block(k);
    t.gamma0_pos[k - 1] = P * stacked.gamma_block(k, 0);
    Eigen::MatrixXd gen(3, 3 * (k - 1));
    Eigen::Vector3d tail = Eigen::Vector3d::Zero();
    for (int j = 1; j < k; ++j) {
      const Eigen::Matrix<double, 3, kInputDim> Gpos = P * stacked.gamma_block(k, j);
      tail += Gpos * uc;
      for (int col = 0; col < kInputDim; ++col) {
        gen.col(3 * (j - 1) + col) = Gpos.col(col) * hw(col);
      }
    }
    t.gen_pos[k - 1] = std::move(gen);
    t.tail_center[k - 1] = tail;
  }
  return t;
}

}  // namespace reachmpc
