#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "reachmpc/human_reach.hpp"
#include "reachmpc/reach.hpp"
#include "test_util.hpp"

using namespace reachmpc;

namespace {

HumanReachParams table_reach() { return HumanReachParams{}; }

ModelParams table_model() {
  ModelParams p;
  p.c_x = p.c_y = p.c_z = 0.01;
  return p;
}

HumanObservation observation_at_rest(const std::array<Eigen::Vector3d, kNumJoints>& joints) {
  HumanObservation obs;
  obs.frame.t = 0.0;
  obs.frame.joints = joints;
  obs.frame.observed_at.fill(0.0);
  obs.unobserved.fill(0.0);
  obs.v0.fill(0.0);
  return obs;
}

std::array<Eigen::Vector3d, kNumJoints> standing_pose() {
  std::mt19937_64 rng(0);
  return testutil::random_body_motion(rng, 0.0, 1.0).front().joints;
}

}  // namespace

TEST_CASE("support function on axis-aligned examples") {
  Zonotope z;
  z.c = Eigen::Vector2d::Zero();
  z.G = Eigen::Matrix2d::Identity();
  CHECK(support(z, Eigen::Vector2d(1.0, 1.0)) == doctest::Approx(2.0));

  Zonotope z2;
  z2.c = Eigen::Vector2d(1.0, 0.0);
  z2.G.resize(2, 2);
  z2.G << 1.0, 0.0, 0.0, 2.0;
  CHECK(support(z2, Eigen::Vector2d(0.0, 1.0)) == doctest::Approx(2.0));

  CHECK_THROWS_AS(support(z, Eigen::Vector2d::Zero()), std::invalid_argument);
}

TEST_CASE("support equals vertex-enumeration max on random zonotopes") {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> gens(0, 5);
  for (int trial = 0; trial < 500; ++trial) {
    const int dim = 2 + trial % 3;
    const int m = gens(rng);
    Zonotope z;
    z.c.resize(dim);
    for (int i = 0; i < dim; ++i) z.c(i) = gauss(rng);
    z.G.resize(dim, m);
    for (int i = 0; i < dim; ++i) {
      for (int j = 0; j < m; ++j) z.G(i, j) = gauss(rng);
    }
    Eigen::VectorXd n(dim);
    for (int i = 0; i < dim; ++i) n(i) = gauss(rng);
    if (n.norm() < 1e-6) continue;
    CHECK(std::abs(support(z, n) - testutil::support_by_vertex_enumeration(z, n)) < 1e-12);
  }
}

TEST_CASE("grow_radius closed forms") {
  const HumanReachParams p = table_reach();
  CHECK(grow_radius(0.3, 0.0, 0.5, p) == doctest::Approx(0.3));
  // Saturated velocity from the start.
  CHECK(grow_radius(0.2, 0.5, 1.0, p) == doctest::Approx(0.2 + 0.5));
  // Accelerating phase then saturation: v0=0, a=1, v_max=1, t=2.
  CHECK(grow_radius(0.0, 2.0, 0.0, p) == doctest::Approx(0.5 + 1.0));
  CHECK_THROWS_AS(grow_radius(0.1, -0.1, 0.0, p), std::invalid_argument);

  // Monotone in t and v0.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const double t1 = 2.0 * u01(rng), t2 = t1 + u01(rng);
    const double v1 = u01(rng), v2 = std::min(1.0, v1 + u01(rng));
    CHECK(grow_radius(0.1, t2, v1, p) >= grow_radius(0.1, t1, v1, p));
    CHECK(grow_radius(0.1, t1, v2, p) >= grow_radius(0.1, t1, v1, p));
  }
}

TEST_CASE("complex set holds 14 primitives with Table-consistent radii") {
  const HumanReachParams p = table_reach();
  const SkeletonMap skel = SkeletonMap::standard();
  REQUIRE(skel.segments.size() == 14);
  int spheres = 0, capsules = 0;
  for (const auto& seg : skel.segments) {
    (seg.joint_b < 0 ? spheres : capsules)++;
  }
  CHECK(spheres == 4);
  CHECK(capsules == 10);

  const HumanObservation obs = observation_at_rest(standing_pose());
  const auto prims = complex_set(obs, 0.0, skel, p);
  REQUIRE(prims.size() == 14);

  // Head sphere at rho_head + R_mav.
  bool found_head = false;
  for (size_t i = 0; i < prims.size(); ++i) {
    if (skel.segments[i].joint_a == joint::head && skel.segments[i].joint_b < 0) {
      found_head = true;
      CHECK(std::get<Sphere>(prims[i]).radius == doctest::Approx(0.2 + 0.5));
    }
  }
  CHECK(found_head);
}

TEST_CASE("saturated growth adds exactly v_max*t to every radius") {
  const HumanReachParams p = table_reach();
  const SkeletonMap skel = SkeletonMap::standard();
  HumanObservation obs = observation_at_rest(standing_pose());
  obs.v0.fill(p.v_max);
  const auto at0 = complex_set(obs, 0.0, skel, p);
  const auto at05 = complex_set(obs, 0.5, skel, p);
  for (size_t i = 0; i < at0.size(); ++i) {
    const double r0 = std::holds_alternative<Sphere>(at0[i])
                          ? std::get<Sphere>(at0[i]).radius
                          : std::get<Capsule>(at0[i]).radius;
    const double r5 = std::holds_alternative<Sphere>(at05[i])
                          ? std::get<Sphere>(at05[i]).radius
                          : std::get<Capsule>(at05[i]).radius;
    CHECK(r5 - r0 == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("staleness adds to the lead time") {
  const HumanReachParams p = table_reach();
  const SkeletonMap skel = SkeletonMap::standard();
  HumanObservation fresh = observation_at_rest(standing_pose());
  fresh.v0.fill(0.3);
  HumanObservation stale = fresh;
  stale.unobserved.fill(0.1);
  const auto grown_fresh = complex_set(fresh, 0.3, skel, p);
  const auto grown_stale = complex_set(stale, 0.2, skel, p);
  for (size_t i = 0; i < grown_fresh.size(); ++i) {
    const double rf = std::holds_alternative<Sphere>(grown_fresh[i])
                          ? std::get<Sphere>(grown_fresh[i]).radius
                          : std::get<Capsule>(grown_fresh[i]).radius;
    const double rs = std::holds_alternative<Sphere>(grown_stale[i])
                          ? std::get<Sphere>(grown_stale[i]).radius
                          : std::get<Capsule>(grown_stale[i]).radius;
    CHECK(rf == doctest::Approx(rs).epsilon(1e-12));
  }
}

TEST_CASE("simplified cylinder radius and vertical extent") {
  const HumanReachParams p = table_reach();
  auto pose = standing_pose();
  // Pin the vertical extent to [0, 1.8] for the hand computation.
  for (auto& j : pose) j.z() = std::clamp(j.z(), 0.0, 1.8);
  pose[joint::left_foot].z() = 0.0;
  pose[joint::head].z() = 1.8;
  const HumanObservation obs = observation_at_rest(pose);

  const auto prim = simplified_set(obs, 0.0, p);
  const auto& cyl = std::get<VerticalCylinder>(prim);
  CHECK(cyl.radius == doctest::Approx(0.9 + 0.5));  // arm span + safety radius
  CHECK(cyl.z_min == doctest::Approx(-0.5));
  CHECK(cyl.z_max == doctest::Approx(1.8 + 0.5));

  // Saturated root speed grows the radius by v_max * dt.
  HumanObservation fast = obs;
  fast.v0.fill(p.v_max);
  const VerticalCylinder c0 = std::get<VerticalCylinder>(simplified_set(fast, 0.0, p));
  const VerticalCylinder c5 = std::get<VerticalCylinder>(simplified_set(fast, 0.5, p));
  CHECK(c5.radius - c0.radius == doctest::Approx(0.5));
}

TEST_CASE("hybrid switching at t_switch") {
  const HumanReachParams p = table_reach();
  const SkeletonMap skel = SkeletonMap::standard();
  const HumanObservation obs = observation_at_rest(standing_pose());

  const auto hset = hybrid_set(obs, 40, 0.025, skel, p);
  REQUIRE(hset.steps.size() == 40);
  for (int k = 1; k <= 40; ++k) {
    if (k <= 7) {
      CHECK(hset.steps[k - 1].size() == 14);  // k*Ts < 0.2
    } else {
      CHECK(hset.steps[k - 1].size() == 1);
    }
  }

  HumanReachParams all_complex = p;
  all_complex.t_switch = 41 * 0.025;
  for (const auto& step : hybrid_set(obs, 40, 0.025, skel, all_complex).steps) {
    CHECK(step.size() == 14);
  }
  HumanReachParams all_simple = p;
  all_simple.t_switch = 0.0;
  for (const auto& step : hybrid_set(obs, 40, 0.025, skel, all_simple).steps) {
    CHECK(step.size() == 1);
  }
}

TEST_CASE("hybrid primitives are nested across steps within a regime") {
  const HumanReachParams p = table_reach();
  const SkeletonMap skel = SkeletonMap::standard();
  std::mt19937_64 rng(9);
  HumanObservation obs = observation_at_rest(standing_pose());
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (auto& v : obs.v0) v = u01(rng);

  const auto hset = hybrid_set(obs, 40, 0.025, skel, p);
  for (int k = 1; k < 40; ++k) {
    const auto& a = hset.steps[k - 1];
    const auto& b = hset.steps[k];
    if (a.size() != b.size()) continue;  // regime boundary
    for (size_t i = 0; i < a.size(); ++i) {
      if (std::holds_alternative<Sphere>(a[i])) {
        CHECK(std::get<Sphere>(b[i]).radius >= std::get<Sphere>(a[i]).radius);
      } else if (std::holds_alternative<Capsule>(a[i])) {
        CHECK(std::get<Capsule>(b[i]).radius >= std::get<Capsule>(a[i]).radius);
      } else {
        const auto& ca = std::get<VerticalCylinder>(a[i]);
        const auto& cb = std::get<VerticalCylinder>(b[i]);
        CHECK(cb.radius >= ca.radius);
        CHECK(cb.z_min <= ca.z_min);
        CHECK(cb.z_max >= ca.z_max);
      }
    }
  }
}

TEST_CASE("closest point and normal on the primitive family") {
  // Sphere outside.
  ReachPrimitive s = Sphere{Eigen::Vector3d::Zero(), 1.0};
  auto cp = closest_point_normal(s, Eigen::Vector3d(3.0, 0.0, 0.0));
  CHECK(cp.point.isApprox(Eigen::Vector3d(1.0, 0.0, 0.0), 1e-12));
  CHECK(cp.normal.isApprox(Eigen::Vector3d(1.0, 0.0, 0.0), 1e-12));
  CHECK(cp.signed_distance == doctest::Approx(2.0));

  // Sphere interior.
  cp = closest_point_normal(s, Eigen::Vector3d(0.5, 0.0, 0.0));
  CHECK(cp.signed_distance == doctest::Approx(-0.5));
  CHECK(cp.normal.isApprox(Eigen::Vector3d(1.0, 0.0, 0.0), 1e-12));

  // Capsule side.
  ReachPrimitive c =
      Capsule{Eigen::Vector3d(0.0, 0.0, 0.0), Eigen::Vector3d(0.0, 0.0, 1.0), 0.3};
  cp = closest_point_normal(c, Eigen::Vector3d(1.0, 0.0, 0.5));
  CHECK(cp.point.isApprox(Eigen::Vector3d(0.3, 0.0, 0.5), 1e-12));
  CHECK(cp.signed_distance == doctest::Approx(0.7));

  // Vertical cylinder side.
  ReachPrimitive cyl = VerticalCylinder{Eigen::Vector2d::Zero(), 1.0, 0.0, 2.0};
  cp = closest_point_normal(cyl, Eigen::Vector3d(2.0, 0.0, 1.0));
  CHECK(cp.signed_distance == doctest::Approx(1.0));
  CHECK(cp.normal.isApprox(Eigen::Vector3d(1.0, 0.0, 0.0), 1e-12));

  // Cylinder cap and edge.
  cp = closest_point_normal(cyl, Eigen::Vector3d(0.2, 0.0, 3.0));
  CHECK(cp.signed_distance == doctest::Approx(1.0));
  CHECK(cp.normal.isApprox(Eigen::Vector3d(0.0, 0.0, 1.0), 1e-12));
  cp = closest_point_normal(cyl, Eigen::Vector3d(2.0, 0.0, 3.0));
  CHECK(cp.signed_distance == doctest::Approx(std::sqrt(2.0)));

  // Degenerate tie-breaks stay deterministic and on the boundary.
  cp = closest_point_normal(s, Eigen::Vector3d::Zero());
  CHECK(cp.normal.isApprox(Eigen::Vector3d(0.0, 0.0, 1.0), 1e-12));
  CHECK(cp.point.isApprox(Eigen::Vector3d(0.0, 0.0, 1.0), 1e-12));
  cp = closest_point_normal(c, Eigen::Vector3d(0.0, 0.0, 0.5));
  CHECK(cp.normal.isApprox(Eigen::Vector3d(0.0, 0.0, 1.0), 1e-12));
  CHECK(cp.signed_distance == doctest::Approx(-0.3));
}

TEST_CASE("closest point agrees with dense sampling of the boundary distance") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    ReachPrimitive prim;
    const int kind = trial % 3;
    if (kind == 0) {
      prim = Sphere{Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng)), 0.2 + u01(rng)};
    } else if (kind == 1) {
      Eigen::Vector3d a(gauss(rng), gauss(rng), gauss(rng));
      Eigen::Vector3d b = a + Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
      prim = Capsule{a, b, 0.2 + u01(rng)};
    } else {
      const double zl = gauss(rng);
      prim = VerticalCylinder{Eigen::Vector2d(gauss(rng), gauss(rng)), 0.2 + u01(rng), zl,
                              zl + 0.5 + u01(rng)};
    }
    const Eigen::Vector3d q(2.0 * gauss(rng), 2.0 * gauss(rng), 2.0 * gauss(rng));
    const ClosestPoint cp = closest_point_normal(prim, q);
    // m on the boundary, n unit, and the hyperplane supports the primitive.
    CHECK(std::abs(signed_distance(prim, cp.point)) < 1e-7);
    CHECK(cp.normal.norm() == doctest::Approx(1.0));
    // Support property: no sampled interior point lies past the hyperplane.
    for (int s = 0; s < 200; ++s) {
      Eigen::Vector3d probe = q + Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
      if (signed_distance(prim, probe) <= 0.0) {
        CHECK(cp.normal.dot(probe - cp.point) <= 1e-9);
      }
    }
  }
}

TEST_CASE("mav_reachable center and generators") {
  const DiscreteModel model = build_model(table_model());
  const StackedDynamics stacked = stack(model, 10);
  ControlBounds bounds;
  StateVec x0 = StateVec::Zero();
  x0(idx::x) = 1.0;
  x0(idx::xd) = 0.5;
  const InputVec u0(0.1, 0.05, -0.05);

  // k = 1 is fully determined by u0.
  const Zonotope z1 = mav_reachable(stacked, x0, u0, bounds, 1);
  CHECK(z1.num_generators() == 0);
  const StateVec x1 = model.A * x0 + model.B * u0;
  CHECK(z1.c.isApprox(x1.head<3>(), 1e-12));

  // Zero-width bounds collapse to the nominal propagated point.
  ControlBounds pinned;
  pinned.u_min = pinned.u_max = InputVec(0.05, 0.0, 0.0);
  const Zonotope z4 = mav_reachable(stacked, x0, u0, pinned, 4);
  CHECK(z4.num_generators() == 0);
  StateVec x = model.A * x0 + model.B * u0;
  for (int k = 2; k <= 4; ++k) x = model.A * x + model.B * InputVec(0.05, 0.0, 0.0);
  CHECK(z4.c.isApprox(x.head<3>(), 1e-12));

  CHECK_THROWS_AS(mav_reachable(stacked, x0, u0, bounds, 0), std::invalid_argument);
  CHECK_THROWS_AS(mav_reachable(stacked, x0, u0, bounds, 11), std::invalid_argument);
}

TEST_CASE("reachable-set support matches extreme control enumeration") {
  const DiscreteModel model = build_model(table_model());
  const int k = 4;
  const StackedDynamics stacked = stack(model, k);
  ControlBounds bounds;
  StateVec x0 = StateVec::Zero();
  x0(idx::zd) = 0.3;
  const InputVec u0(0.05, 0.1, 0.0);

  const Zonotope z = mav_reachable(stacked, x0, u0, bounds, k);

  std::mt19937_64 rng(17);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    Eigen::Vector3d n(gauss(rng), gauss(rng), gauss(rng));
    n.normalize();
    // Enumerate all extreme sequences for inputs 1..k-1.
    double best = -std::numeric_limits<double>::infinity();
    const int nfree = 3 * (k - 1);
    for (int mask = 0; mask < (1 << nfree); ++mask) {
      StateVec xs = model.A * x0 + model.B * u0;
      for (int j = 1; j < k; ++j) {
        InputVec u;
        for (int c = 0; c < 3; ++c) {
          const int bit = 3 * (j - 1) + c;
          u(c) = ((mask >> bit) & 1) ? bounds.u_max(c) : bounds.u_min(c);
        }
        xs = model.A * xs + model.B * u;
      }
      best = std::max(best, n.dot(xs.head<3>()));
    }
    CHECK(support(z, Eigen::VectorXd(n)) == doctest::Approx(best).epsilon(1e-10));
  }
}

TEST_CASE("double-integrator toy: full-freedom half-extent in closed form") {
  // 1D double integrator, |u| <= 1: position half-extent of the k-step
  // reachable set with all k inputs free is sum_{j=0}^{k-1} j*Ts^2
  // (blocks A^j B with B = [0, Ts]).
  const double Ts = 0.1;
  Eigen::MatrixXd A(2, 2), B(2, 1);
  A << 1.0, Ts, 0.0, 1.0;
  B << 0.0, Ts;
  const int k = 4;
  const StackedDynamics s = stack_generic(A, B, k);
  Zonotope z;
  z.c = Eigen::VectorXd::Zero(1);
  z.G.resize(1, k);
  for (int j = 0; j < k; ++j) {
    z.G(0, j) = s.gamma_block(k, j)(0, 0);  // position row, unit half-width
  }
  const double expected = (0.0 + 1.0 + 2.0 + 3.0) * Ts * Ts;
  CHECK(support(z, Eigen::VectorXd::Ones(1)) == doctest::Approx(expected));
  // Same value from enumerating all 2^k extreme input sequences.
  double best = -1e9;
  for (int mask = 0; mask < (1 << k); ++mask) {
    Eigen::Vector2d x = Eigen::Vector2d::Zero();
    for (int j = 0; j < k; ++j) {
      x = A * x + B * Eigen::VectorXd::Constant(1, ((mask >> j) & 1) ? 1.0 : -1.0);
    }
    best = std::max(best, x(0));
  }
  CHECK(best == doctest::Approx(expected));
}

TEST_CASE("set_distance signs and values against a sampling oracle") {
  // Point zonotope at the sphere center.
  Zonotope pt;
  pt.c = Eigen::Vector3d::Zero();
  pt.G.resize(3, 0);
  ReachPrimitive s = Sphere{Eigen::Vector3d::Zero(), 1.0};
  CHECK(set_distance(pt, s) == doctest::Approx(-1.0));

  // Point zonotope 3 m from the surface-nearest direction.
  pt.c = Eigen::Vector3d(4.0, 0.0, 0.0);
  CHECK(set_distance(pt, s) == doctest::Approx(3.0));

  // Small random zonotopes vs spheres, checked by dense xi sampling.
  std::mt19937_64 rng(23);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uxi(-1.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    Zonotope z;
    z.c = Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng)) * 0.8;
    z.G.resize(3, 3);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) z.G(i, j) = 0.025 * gauss(rng);
    }
    ReachPrimitive sphere = Sphere{Eigen::Vector3d::Zero(), 1.0};
    const double d = set_distance(z, sphere);

    double min_dist = std::numeric_limits<double>::infinity();
    double max_depth = -std::numeric_limits<double>::infinity();
    bool any_outside = false;
    for (int sidx = 0; sidx < 100000; ++sidx) {
      Eigen::Vector3d xi(uxi(rng), uxi(rng), uxi(rng));
      const Eigen::Vector3d x = z.c + z.G * xi;
      const double sd = x.norm() - 1.0;
      if (sd > 0.0) any_outside = true;
      min_dist = std::min(min_dist, sd);
      max_depth = std::max(max_depth, sd);
    }
    double oracle;
    if (!any_outside) {
      oracle = max_depth;  // negative: depth of the outermost point
    } else if (min_dist < 0.0) {
      oracle = 0.0;  // overlap
    } else {
      oracle = min_dist;
    }
    CHECK(std::abs(d - oracle) < 2e-2);
    CHECK(((d < 0) == (oracle < 0) || std::abs(d) < 2e-2));
  }
}

TEST_CASE("conservatism: realized joints stay inside grown primitives") {
  const HumanReachParams p = table_reach();
  const SkeletonMap skel = SkeletonMap::standard();
  std::mt19937_64 rng(101);
  const double dt = 1.0 / 30.0;

  int violations = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const auto motion = testutil::random_body_motion(rng, 2.2, dt);
    // Observation from the first two frames (finite-difference v0).
    const std::vector<HumanFrame> hist(motion.begin(), motion.begin() + 2);
    const HumanObservation obs = HumanObservation::from_history(hist, hist.back().t, p);
    const double t0 = hist.back().t;

    const auto hset = hybrid_set(obs, 40, 0.025, skel, p);
    for (int k = 1; k <= 40; ++k) {
      const double t = t0 + k * 0.025;
      // Realized joints at lead time t (interpolated).
      const auto it = std::lower_bound(
          motion.begin(), motion.end(), t,
          [](const HumanFrame& f, double tv) { return f.t < tv; });
      if (it == motion.end() || it == motion.begin()) continue;
      const HumanFrame& hi = *it;
      const HumanFrame& lo = *(it - 1);
      const double w = (t - lo.t) / (hi.t - lo.t);
      for (int j = 0; j < kNumJoints; ++j) {
        const Eigen::Vector3d pos = (1.0 - w) * lo.joints[j] + w * hi.joints[j];
        bool inside = false;
        for (const auto& prim : hset.steps[k - 1]) {
          if (signed_distance(prim, pos) <= 0.0) {
            inside = true;
            break;
          }
        }
        if (!inside) ++violations;
      }
    }
  }
  CHECK(violations == 0);
}
