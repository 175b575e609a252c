#include "reachmpc/primitives.hpp"

#include <algorithm>
#include <cmath>

namespace reachmpc {

namespace {

constexpr double kDegenerate = 1e-12;
const Eigen::Vector3d kUnitZ{0.0, 0.0, 1.0};
const Eigen::Vector3d kUnitX{1.0, 0.0, 0.0};

ClosestPoint query_sphere(const Sphere& s, const Eigen::Vector3d& q) {
  const Eigen::Vector3d d = q - s.center;
  const double rho = d.norm();
  if (rho < kDegenerate) {
    // Query at the center: support point in +z.
    return {s.center + s.radius * kUnitZ, kUnitZ, -s.radius};
  }
  const Eigen::Vector3d n = d / rho;
  return {s.center + s.radius * n, n, rho - s.radius};
}

ClosestPoint query_capsule(const Capsule& c, const Eigen::Vector3d& q) {
  const Eigen::Vector3d ab = c.b - c.a;
  const double len2 = ab.squaredNorm();
  Eigen::Vector3d on_axis = c.a;
  if (len2 > kDegenerate) {
    const double s = std::clamp((q - c.a).dot(ab) / len2, 0.0, 1.0);
    on_axis = c.a + s * ab;
  }
  const Eigen::Vector3d d = q - on_axis;
  const double rho = d.norm();
  if (rho < kDegenerate) {
    // On the axis: use the +z support point of the capsule.
    const Eigen::Vector3d top = (c.a.z() >= c.b.z()) ? c.a : c.b;
    return {top + c.radius * kUnitZ, kUnitZ, -c.radius};
  }
  const Eigen::Vector3d n = d / rho;
  return {on_axis + c.radius * n, n, rho - c.radius};
}

ClosestPoint query_cylinder(const VerticalCylinder& cy, const Eigen::Vector3d& q) {
  const Eigen::Vector2d rad = q.head<2>() - cy.axis_xy;
  const double rho = rad.norm();
  const bool inside_r = rho <= cy.radius;
  const bool inside_z = q.z() >= cy.z_min && q.z() <= cy.z_max;

  auto radial_dir = [&]() -> Eigen::Vector2d {
    if (rho < kDegenerate) return Eigen::Vector2d(1.0, 0.0);
    return rad / rho;
  };

  if (inside_r && inside_z) {
    const double d_side = cy.radius - rho;
    const double d_top = cy.z_max - q.z();
    const double d_bot = q.z() - cy.z_min;
    const double dmin = std::min({d_side, d_top, d_bot});
    if (dmin == d_side && rho >= kDegenerate) {
      const Eigen::Vector2d nr = radial_dir();
      Eigen::Vector3d m(cy.axis_xy.x() + cy.radius * nr.x(),
                        cy.axis_xy.y() + cy.radius * nr.y(), q.z());
      return {m, Eigen::Vector3d(nr.x(), nr.y(), 0.0), -dmin};
    }
    if (d_top <= d_bot) {
      return {Eigen::Vector3d(q.x(), q.y(), cy.z_max), kUnitZ, -dmin};
    }
    return {Eigen::Vector3d(q.x(), q.y(), cy.z_min), -kUnitZ, -dmin};
  }

  const double zc = std::clamp(q.z(), cy.z_min, cy.z_max);
  if (inside_z) {  // beside the lateral wall, rho > radius
    const Eigen::Vector2d nr = rad / rho;
    Eigen::Vector3d m(cy.axis_xy.x() + cy.radius * nr.x(),
                      cy.axis_xy.y() + cy.radius * nr.y(), q.z());
    return {m, Eigen::Vector3d(nr.x(), nr.y(), 0.0), rho - cy.radius};
  }
  if (inside_r) {  // above or below a cap
    const double dz = std::abs(q.z() - zc);
    const Eigen::Vector3d n = (q.z() > cy.z_max) ? kUnitZ : -kUnitZ;
    return {Eigen::Vector3d(q.x(), q.y(), zc), n, dz};
  }
  // Edge region.
  const Eigen::Vector2d nr = rad / rho;
  const Eigen::Vector3d m(cy.axis_xy.x() + cy.radius * nr.x(),
                          cy.axis_xy.y() + cy.radius * nr.y(), zc);
  const Eigen::Vector3d d = q - m;
  const double dist = d.norm();
  if (dist < kDegenerate) {
    return {m, Eigen::Vector3d(nr.x(), nr.y(), 0.0), 0.0};
  }
  return {m, d / dist, dist};
}

}  // namespace

ClosestPoint closest_point_normal(const ReachPrimitive& prim, const Eigen::Vector3d& q) {
  return std::visit(
      [&](const auto& p) -> ClosestPoint {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Sphere>) return query_sphere(p, q);
        if constexpr (std::is_same_v<T, Capsule>) return query_capsule(p, q);
        if constexpr (std::is_same_v<T, VerticalCylinder>) return query_cylinder(p, q);
      },
      prim);
}

double signed_distance(const ReachPrimitive& prim, const Eigen::Vector3d& q) {
  return closest_point_normal(prim, q).signed_distance;
}

}  // namespace reachmpc
