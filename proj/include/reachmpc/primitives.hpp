#pragma once

#include <Eigen/Dense>
#include <variant>

namespace reachmpc {

/// Conservative human-body over-approximations. All radii already include
/// the MAV safety radius when produced by the reachable-set builders.
struct Sphere {
  Eigen::Vector3d center;
  double radius;
};

struct Capsule {
  Eigen::Vector3d a;
  Eigen::Vector3d b;
  double radius;
};

struct VerticalCylinder {
  Eigen::Vector2d axis_xy;
  double radius;
  double z_min;
  double z_max;
};

using ReachPrimitive = std::variant<Sphere, Capsule, VerticalCylinder>;

/// Boundary point closest to q, its outward unit normal, and the signed
/// distance (positive outside, negative inside). At exact symmetry centers
/// the query is degenerate and the support point in +z is used instead.
struct ClosestPoint {
  Eigen::Vector3d point;
  Eigen::Vector3d normal;
  double signed_distance;
};

ClosestPoint closest_point_normal(const ReachPrimitive& prim, const Eigen::Vector3d& q);

double signed_distance(const ReachPrimitive& prim, const Eigen::Vector3d& q);

inline bool contains(const ReachPrimitive& prim, const Eigen::Vector3d& q) {
  return signed_distance(prim, q) <= 0.0;
}

}  // namespace reachmpc
