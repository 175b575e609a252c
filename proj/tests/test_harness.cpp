#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "reachmpc/harness/generate.hpp"
#include "reachmpc/harness/report.hpp"
#include "reachmpc/harness/runner.hpp"
#include "test_util.hpp"

using namespace reachmpc;
using namespace reachmpc::harness;

namespace {

Scenario empty_human_scenario() {
  Scenario sc;
  sc.name = "empty";
  sc.seed = 1;
  sc.x0.p = Eigen::Vector3d(0.0, 0.0, 1.0);
  sc.goal = Eigen::Vector3d(2.5, 1.0, 1.2);
  sc.timeout = 25.0;
  return sc;
}

Scenario walker_scenario(MethodKind method, std::uint64_t seed) {
  Scenario sc;
  sc.name = "walker";
  sc.seed = seed;
  sc.method = method;
  sc.x0.p = Eigen::Vector3d(-3.5, 0.1, 1.2);
  sc.goal = Eigen::Vector3d(3.5, 0.0, 1.2);
  sc.timeout = 25.0;
  HumanSpec h;
  SyntheticWalker w;
  w.speed = 0.9;
  w.heading = M_PI / 2.0;  // crossing the path
  w.duration = 35.0;
  w.rate = 30.0;
  w.seed = seed;
  h.synthetic = w;
  h.offset = Eigen::Vector3d(0.0, -2.5, 0.0);
  sc.humans.push_back(h);
  return sc;
}

}  // namespace

TEST_CASE("scenario json round trip") {
  Scenario sc = walker_scenario(MethodKind::RCComplex, 9);
  sc.disturbance_std = 0.01;
  sc.latency = 0.05;
  const std::string text = scenario_to_json(sc);
  const Scenario back = scenario_from_json(text);
  CHECK(back.name == sc.name);
  CHECK(back.seed == sc.seed);
  CHECK(back.method == MethodKind::RCComplex);
  CHECK((back.x0.p - sc.x0.p).norm() == 0.0);
  CHECK((back.goal.value() - sc.goal.value()).norm() == 0.0);
  REQUIRE(back.humans.size() == 1);
  CHECK(back.humans[0].synthetic->speed == doctest::Approx(0.9));
  CHECK(back.disturbance_std == doctest::Approx(0.01));
  CHECK(back.latency == doctest::Approx(0.05));
  CHECK(back.controller.T == sc.controller.T);
  CHECK(back.controller.model.b1 == doctest::Approx(sc.controller.model.b1));
}

TEST_CASE("method names round trip") {
  for (MethodKind k : all_methods()) {
    CHECK(method_from_string(to_string(k)) == k);
  }
  CHECK_THROWS_AS(method_from_string("vibes"), std::invalid_argument);
}

TEST_CASE("scenario generation is deterministic and respects invariants") {
  GenConfig cfg;
  cfg.n = 4;
  cfg.humans = 1;
  cfg.seed = 11;
  const auto a = gen_scenarios(cfg);
  const auto b = gen_scenarios(cfg);
  REQUIRE(a.size() == 4);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK((a[i].x0.p - b[i].x0.p).norm() == 0.0);
    CHECK((*a[i].goal - *b[i].goal).norm() == 0.0);
    REQUIRE(a[i].humans.size() == 1);
    CHECK(a[i].humans[0].synthetic->speed ==
          doctest::Approx(b[i].humans[0].synthetic->speed));

    // Start and goal clear of the t=0 primitives.
    const JointTrajectory traj = load_human(a[i].humans[0]);
    HumanObservation obs;
    obs.frame = traj.frames.front();
    obs.unobserved.fill(0.0);
    obs.v0.fill(a[i].controller.reach.v_max);
    for (const auto& prim :
         complex_set(obs, 0.0, SkeletonMap::standard(), a[i].controller.reach)) {
      CHECK(signed_distance(prim, a[i].x0.p) >= 0.0);
      CHECK(signed_distance(prim, *a[i].goal) >= 0.0);
    }
  }
}

TEST_CASE("empty-human scenario reaches the goal and is vacuously safe") {
  const auto [log, metrics] = run_scenario(empty_human_scenario());
  CHECK(log.meta.reached_goal);
  CHECK(metrics.time_to_goal.has_value());
  CHECK(metrics.collision_avoided);
  CHECK(std::isinf(metrics.min_joint_distance));
  CHECK(metrics.softened_after_first == 0);
}

TEST_CASE("run log round trips and metrics recompute from it alone") {
  const std::string dir =
      (std::filesystem::temp_directory_path() / "reachmpc_runs").string();
  std::filesystem::create_directories(dir);
  const auto [log, metrics] = run_scenario(walker_scenario(MethodKind::Ours, 21));
  const std::string path = dir + "/walker_ours.jsonl";
  write_runlog(log, path);
  const RunLog back = read_runlog(path);
  REQUIRE(back.steps.size() == log.steps.size());
  const Metrics m2 = metrics_from_log(back);
  CHECK(m2.collision_avoided == metrics.collision_avoided);
  CHECK(m2.min_joint_distance == doctest::Approx(metrics.min_joint_distance));
  CHECK(m2.mean_solver_ms == doctest::Approx(metrics.mean_solver_ms));
  CHECK(back.meta.method == "ours");
  std::filesystem::remove_all(dir);
}

TEST_CASE("determinism: same scenario and seed give identical logs") {
  const Scenario sc = walker_scenario(MethodKind::Ours, 33);
  const auto [log_a, ma] = run_scenario(sc);
  const auto [log_b, mb] = run_scenario(sc);
  REQUIRE(log_a.steps.size() == log_b.steps.size());
  for (size_t i = 0; i < log_a.steps.size(); ++i) {
    CHECK(std::memcmp(log_a.steps[i].u0.data(), log_b.steps[i].u0.data(),
                      3 * sizeof(double)) == 0);
    CHECK(log_a.steps[i].min_joint_dist == log_b.steps[i].min_joint_dist);
  }
}

TEST_CASE("method constraint structure: row footprints differ as designed") {
  ControllerConfig cfg = ControllerConfig::defaults();
  cfg.T = 16;
  Controller c(cfg);
  MavState x0;
  x0.p = Eigen::Vector3d(-1.6, 0.1, 1.2);
  x0.v = Eigen::Vector3d(0.4, 0.0, 0.0);

  std::mt19937_64 rng(3);
  auto motion = testutil::random_body_motion(rng, 0.4, 1.0 / 30.0);
  std::vector<std::vector<HumanFrame>> histories{
      {motion.end() - 3, motion.end()}};

  std::vector<HumanObservation> observations{
      HumanObservation::from_history(histories[0], motion.back().t, cfg.reach)};
  std::vector<Eigen::Vector3d> prev_positions(cfg.T, x0.p);

  StepContext ctx;
  ctx.cfg = &cfg;
  ctx.stacked = &c.stacked();
  ctx.table = &c.reach_table();
  ctx.skeleton = &c.skeleton();
  ctx.x0 = x0.to_vector();
  ctx.now = motion.back().t;
  ctx.observations = &observations;
  ctx.histories = &histories;
  ctx.previous_positions = &prev_positions;

  // None: empty.
  const ConstraintPlan none = method_constraints(MethodKind::None)(ctx);
  CHECK(none.u0_rows.empty());
  CHECK(none.extra_A.rows() == 0);

  // Ours (default builder): u0 rows only.
  const ConstraintPlan ours = Controller::default_rows(ctx);
  CHECK(!ours.u0_rows.empty());

  // ForwardRC: full-width rows with nonzero columns beyond the first block.
  const ConstraintPlan fwd = method_constraints(MethodKind::ForwardRC)(ctx);
  REQUIRE(fwd.extra_A.rows() > 0);
  CHECK(fwd.u0_rows.empty());
  bool any_tail = false;
  for (int i = 0; i < fwd.extra_A.rows(); ++i) {
    if (fwd.extra_A.row(i).tail(3 * cfg.T - 3).cwiseAbs().maxCoeff() > 0.0) {
      any_tail = true;
    }
  }
  CHECK(any_tail);

  // DC: joint-wise rows, also full width.
  const ConstraintPlan dc = method_constraints(MethodKind::DCStatic)(ctx);
  CHECK(dc.extra_A.rows() > 0);

  // RC regimes: per-step primitive counts differ.
  const ConstraintPlan rc_simpl = method_constraints(MethodKind::RCSimplified)(ctx);
  const ConstraintPlan rc_complex = method_constraints(MethodKind::RCComplex)(ctx);
  CHECK(rc_complex.u0_rows.size() > rc_simpl.u0_rows.size());
}

TEST_CASE("nav2d pins altitude for the whole run") {
  Scenario sc = walker_scenario(MethodKind::Nav2D, 5);
  sc.goal->z() = 2.0;  // would climb if unpinned
  const auto [log, metrics] = run_scenario(sc);
  REQUIRE(!log.steps.empty());
  for (const auto& step : log.steps) {
    CHECK(std::abs(step.state(idx::z) - sc.x0.p.z()) < 1e-6);
  }
}

TEST_CASE("report aggregation arithmetic and formats") {
  std::vector<RunSummary> runs;
  for (int i = 0; i < 50; ++i) {
    RunSummary r;
    r.meta.method = "ours";
    r.meta.n_humans = 1;
    r.meta.horizon = 40;
    r.metrics.collision_avoided = i >= 7;  // 43 of 50 safe
    r.metrics.time_to_goal = 4.0 + 0.01 * i;
    r.metrics.mean_solver_ms = 3.0;
    r.metrics.mean_assembly_ms = 1.0;
    runs.push_back(r);
  }
  const auto rows = aggregate(runs);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].runs == 50);
  CHECK(rows[0].avoid_pct == doctest::Approx(86.0));
  CHECK(rows[0].reached == 50);
  CHECK(rows[0].mean_total_ms == doctest::Approx(4.0));

  const std::string csv = format_csv(rows);
  CHECK(csv.find("ours,1,40,50,50,86") != std::string::npos);
  const std::string table = format_table(rows);
  CHECK(table.find("ours") != std::string::npos);
}

TEST_CASE("single safe run aggregates to 100 percent") {
  std::vector<RunSummary> runs(1);
  runs[0].meta.method = "ours";
  runs[0].meta.n_humans = 1;
  runs[0].meta.horizon = 40;
  runs[0].metrics.collision_avoided = true;
  const auto rows = aggregate(runs);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].avoid_pct == doctest::Approx(100.0));
}
