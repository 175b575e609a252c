#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "reachmpc/safety.hpp"
#include "test_util.hpp"

using namespace reachmpc;

namespace {

StackedDynamics make_stacked(int T) {
  ModelParams p;
  return stack(build_model(p), T);
}

HumanObservation pose_observation(const Eigen::Vector3d& root_offset, double v0) {
  std::mt19937_64 rng(0);
  HumanObservation obs;
  obs.frame = testutil::random_body_motion(rng, 0.0, 1.0).front();
  for (auto& j : obs.frame.joints) j += root_offset;
  obs.frame.observed_at.fill(0.0);
  obs.unobserved.fill(0.0);
  obs.v0.fill(v0);
  return obs;
}

}  // namespace

TEST_CASE("far humans leave every row satisfiable by the whole box") {
  const StackedDynamics stacked = make_stacked(40);
  ControlBounds bounds;
  const SkeletonMap skel = SkeletonMap::standard();
  const HumanReachParams reach;
  const HumanObservation obs = pose_observation(Eigen::Vector3d(15.0, 0.0, 0.0), 1.0);
  const HumanReachableSet hset = hybrid_set(obs, 40, 0.025, skel, reach);

  const StateVec x0 = StateVec::Zero();
  const auto rows = build_rows(x0, stacked, hset, bounds, 0.01);
  // Everything beyond the pruning slack disappears; anything left must be
  // satisfied at all 8 box vertices.
  for (const auto& row : rows) {
    for (int mask = 0; mask < 8; ++mask) {
      InputVec u;
      for (int i = 0; i < 3; ++i) {
        u(i) = (mask & (1 << i)) ? bounds.u_max(i) : bounds.u_min(i);
      }
      CHECK(row.a.dot(u) >= row.b);
    }
  }
  const SafetyReport report = check_feasible(rows, bounds, 0.01);
  CHECK(report.feasible_under_bounds);
}

TEST_CASE("row coefficients match a separable hand expansion") {
  // Wall-like primitive straight ahead on +x of the step-k anchor point; the
  // normal is then exactly -x and every term of the row can be maximized
  // block by block.
  const int k = 5;
  const StackedDynamics stacked = make_stacked(8);
  ControlBounds bounds;
  const double eps = 0.01;

  StateVec x0 = StateVec::Zero();
  x0(idx::xd) = 0.4;
  const InputVec uc = bounds.center();
  const InputVec hw = bounds.half_width();

  Eigen::Matrix<double, 3, kStateDim> P = Eigen::Matrix<double, 3, kStateDim>::Zero();
  P(0, idx::x) = P(1, idx::y) = P(2, idx::z) = 1.0;

  // Anchor = center of the unconditioned reachable set at step k.
  Eigen::Vector3d anchor = P * (stacked.phi_block(k) * x0);
  for (int j = 0; j < k; ++j) anchor += P * (stacked.gamma_block(k, j) * uc);

  const double L = 2.0, radius = 0.6;
  const Eigen::Vector3d sphere_center = anchor + Eigen::Vector3d(L, 0.0, 0.0);

  HumanReachableSet hset;
  hset.steps.resize(k);
  hset.steps[k - 1] = {Sphere{sphere_center, radius}};

  const auto rows = build_rows(x0, stacked, hset, bounds, eps);
  REQUIRE(rows.size() == 1);
  const ConstraintRow& row = rows[0];
  CHECK(row.k == k);

  const Eigen::Vector3d n(-1.0, 0.0, 0.0);
  const Eigen::Vector3d m = sphere_center - radius * Eigen::Vector3d(1.0, 0.0, 0.0);

  // a = (P A^{k-1} B)' n.
  const Eigen::Vector3d a_hand =
      (P * stacked.gamma_block(k, 0)).transpose() * n;
  CHECK((row.a - a_hand).cwiseAbs().maxCoeff() < 1e-10);

  // b = eps + n'm - n'(P A^k x0) - n' tail - sum_j max-block contributions.
  double b_hand = eps + n.dot(m) - n.dot(P * (stacked.phi_block(k) * x0));
  for (int j = 1; j < k; ++j) {
    const Eigen::Matrix<double, 3, kInputDim> Gj = P * stacked.gamma_block(k, j);
    b_hand -= n.dot(Gj * uc);
    for (int c = 0; c < kInputDim; ++c) {
      b_hand -= std::abs(n.dot(Gj.col(c))) * hw(c);
    }
  }
  CHECK(std::abs(row.b - b_hand) < 1e-10);
}

TEST_CASE("k=1 rows carry no half-extent term") {
  const int T = 6;
  const StackedDynamics stacked = make_stacked(T);
  ControlBounds bounds;
  const double eps = 0.01;
  StateVec x0 = StateVec::Zero();

  const Eigen::Vector3d sphere_center(1.5, 0.0, 1.0);
  const double radius = 0.7;
  HumanReachableSet hset;
  hset.steps.resize(1);
  hset.steps[0] = {Sphere{sphere_center, radius}};

  const auto rows = build_rows(x0, stacked, hset, bounds, eps);
  REQUIRE(rows.size() == 1);
  const ConstraintRow& row = rows[0];
  REQUIRE(row.k == 1);

  // Recompute without any generator term; must agree exactly.
  Eigen::Matrix<double, 3, kStateDim> P = Eigen::Matrix<double, 3, kStateDim>::Zero();
  P(0, idx::x) = P(1, idx::y) = P(2, idx::z) = 1.0;
  const Eigen::Vector3d anchor =
      P * (stacked.phi_block(1) * x0) + P * (stacked.gamma_block(1, 0) * bounds.center());
  const ClosestPoint cp = closest_point_normal(hset.steps[0][0], anchor);
  const double b_hand =
      eps + cp.normal.dot(cp.point) - cp.normal.dot(P * (stacked.phi_block(1) * x0));
  CHECK(std::abs(row.b - b_hand) < 1e-12);
}

TEST_CASE("rows are reproducible and independent of any candidate input") {
  const StackedDynamics stacked = make_stacked(20);
  ControlBounds bounds;
  const SkeletonMap skel = SkeletonMap::standard();
  const HumanReachParams reach;
  const HumanObservation obs = pose_observation(Eigen::Vector3d(2.0, 0.5, 0.0), 0.7);
  const HumanReachableSet hset = hybrid_set(obs, 20, 0.025, skel, reach);
  StateVec x0 = StateVec::Zero();
  x0(idx::x) = -1.0;

  const auto rows1 = build_rows(x0, stacked, hset, bounds, 0.01);
  const auto rows2 = build_rows(x0, stacked, hset, bounds, 0.01);
  REQUIRE(rows1.size() == rows2.size());
  REQUIRE(!rows1.empty());
  for (size_t i = 0; i < rows1.size(); ++i) {
    CHECK(std::memcmp(rows1[i].a.data(), rows2[i].a.data(), 3 * sizeof(double)) == 0);
    CHECK(rows1[i].b == rows2[i].b);
    CHECK(rows1[i].k == rows2[i].k);
    CHECK(rows1[i].primitive_id == rows2[i].primitive_id);
  }
}

TEST_CASE("check_feasible: empty, single impossible row, compatible rows") {
  ControlBounds bounds;
  CHECK(check_feasible({}, bounds, 0.01).feasible_under_bounds);

  // tau is capped at 0.25, so a'u >= 0.3 with a = (1,0,0) cannot hold.
  ConstraintRow impossible{Eigen::Vector3d(1.0, 0.0, 0.0), 0.3, 1, 0};
  const SafetyReport r1 = check_feasible({impossible}, bounds, 0.01);
  CHECK(!r1.feasible_under_bounds);
  REQUIRE(r1.violated_rows.size() == 1);
  CHECK(r1.violated_rows[0] == 0);

  ConstraintRow row_a{Eigen::Vector3d(1.0, 0.0, 0.0), 0.1, 1, 0};
  ConstraintRow row_b{Eigen::Vector3d(0.0, 1.0, 0.0), 0.05, 2, 1};
  const SafetyReport r2 = check_feasible({row_a, row_b}, bounds, 0.01);
  CHECK(r2.feasible_under_bounds);
  REQUIRE(r2.has_witness);
  CHECK(row_a.a.dot(r2.witness) >= row_a.b - 1e-9);
  CHECK(row_b.a.dot(r2.witness) >= row_b.b - 1e-9);
  CHECK((r2.witness.array() >= bounds.u_min.array() - 1e-12).all());
  CHECK((r2.witness.array() <= bounds.u_max.array() + 1e-12).all());
}

TEST_CASE("check_feasible finds interior points vertices miss") {
  ControlBounds bounds;
  // Two opposing oblique rows satisfied only near the middle of the tau range.
  ConstraintRow up{Eigen::Vector3d(1.0, 0.0, 0.0), -0.13, 1, 0};
  ConstraintRow down{Eigen::Vector3d(-1.0, 0.0, 0.0), -0.12, 1, 1};
  const SafetyReport r = check_feasible({up, down}, bounds, 0.01);
  CHECK(r.feasible_under_bounds);  // tau in [-0.12... wait, -0.13 <= tau <= 0.12]
  CHECK(up.a.dot(r.witness) >= up.b - 1e-9);
  CHECK(down.a.dot(r.witness) >= down.b - 1e-9);
}

TEST_CASE("soften forms the weighted gradient") {
  ConstraintRow row{Eigen::Vector3d(1.0, 0.0, 0.0), 0.3, 1, 0};
  const Eigen::Vector3d grad = soften({row}, 1000.0);
  CHECK(grad.isApprox(Eigen::Vector3d(-1000.0, 0.0, 0.0)));
  CHECK_THROWS_AS(soften({}, 1000.0), std::invalid_argument);
}

TEST_CASE("satisfied rows certify an escaping reachable point") {
  // Whenever a row holds at u0, sampling the u0-conditioned reachable set
  // must surface at least one point outside the primitive.
  const int T = 6;
  const StackedDynamics stacked = make_stacked(T);
  ControlBounds bounds;
  const double eps = 0.01;
  std::mt19937_64 rng(77);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    StateVec x0 = StateVec::Zero();
    x0(idx::x) = gauss(rng);
    x0(idx::y) = gauss(rng);
    x0(idx::z) = 1.0 + 0.3 * gauss(rng);
    x0(idx::xd) = 0.5 * gauss(rng);
    x0(idx::yd) = 0.5 * gauss(rng);

    InputVec u0;
    for (int i = 0; i < 3; ++i) {
      u0(i) = bounds.u_min(i) + (bounds.u_max(i) - bounds.u_min(i)) * u01(rng);
    }

    const int k = 2 + static_cast<int>(u01(rng) * (T - 2));
    ReachPrimitive prim;
    const Eigen::Vector3d center(x0(idx::x) + 1.5 * gauss(rng),
                                 x0(idx::y) + 1.5 * gauss(rng), 1.0 + 0.3 * gauss(rng));
    if (u01(rng) < 0.5) {
      prim = Sphere{center, 0.4 + 0.8 * u01(rng)};
    } else {
      prim = VerticalCylinder{center.head<2>(), 0.5 + 0.9 * u01(rng), center.z() - 1.0,
                              center.z() + 1.0};
    }

    HumanReachableSet hset;
    hset.steps.resize(k);
    hset.steps[k - 1] = {prim};
    const auto rows = build_rows(x0, stacked, hset, bounds, eps);
    if (rows.empty()) continue;  // pruned: more than 10 m of slack
    const ConstraintRow& row = rows[0];
    if (row.a.dot(u0) < row.b) continue;  // row not satisfied by this u0

    ++checked;
    const Zonotope z = mav_reachable(stacked, x0, u0, bounds, k);
    bool found_outside = false;
    const int m = z.num_generators();
    std::uniform_real_distribution<double> uxi(-1.0, 1.0);
    for (int s = 0; s < 20000 && !found_outside; ++s) {
      Eigen::VectorXd xi(m);
      if (s % 2 == 0) {
        // Extreme point in a random direction.
        Eigen::Vector3d d(gauss(rng), gauss(rng), gauss(rng));
        const Eigen::VectorXd gtd = z.G.transpose() * d;
        for (int i = 0; i < m; ++i) xi(i) = gtd(i) >= 0.0 ? 1.0 : -1.0;
      } else {
        for (int i = 0; i < m; ++i) xi(i) = uxi(rng);
      }
      const Eigen::Vector3d x = z.c + z.G * xi;
      if (signed_distance(prim, x) > 0.0) found_outside = true;
    }
    CHECK_MESSAGE(found_outside, "trial ", trial, " k=", k);
  }
  CHECK(checked > 15);
}
