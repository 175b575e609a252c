#pragma once

#include <vector>

#include "reachmpc/dynamics.hpp"
#include "reachmpc/primitives.hpp"
#include "reachmpc/zonotope.hpp"

namespace reachmpc {

/// Position projection of the MAV reachable set at step k conditioned on u0:
/// the first input is fixed at u0 while inputs 1..k-1 range over the box.
/// k = 1 yields a point set (zero generators). Throws for k outside 1..T.
Zonotope mav_reachable(const StackedDynamics& stacked, const StateVec& x0,
                       const InputVec& u0, const ControlBounds& bounds, int k);

/// Signed set distance per the non-containment convention: negative depth
/// when the zonotope sits inside the primitive, zero on overlap, positive
/// clearance otherwise. Evaluated through the supporting hyperplane at the
/// zonotope center.
double set_distance(const Zonotope& z, const ReachPrimitive& prim);

/// Per-step position-space slices of the stacked dynamics, precomputed once
/// per (stacked, bounds) pair; the constraint assembly is a hot path.
struct MavReachTable {
  // Index k-1 holds step k (k = 1..T).
  std::vector<Eigen::Matrix<double, 3, kStateDim>> phi_pos;  ///< P A^k
  std::vector<Eigen::Matrix3d> gamma0_pos;                   ///< P A^(k-1) B
  std::vector<Eigen::MatrixXd> gen_pos;       ///< generators, 3 x 3(k-1)
  std::vector<Eigen::Vector3d> tail_center;   ///< P sum_{j=1}^{k-1} A^(k-1-j) B u_c
  ControlBounds bounds;
  int T = 0;

  static MavReachTable build(const StackedDynamics& stacked, const ControlBounds& bounds);
};

}  // namespace reachmpc
