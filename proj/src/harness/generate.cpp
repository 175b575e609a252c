#include "reachmpc/harness/generate.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "reachmpc/safety.hpp"

namespace reachmpc::harness {

namespace {

bool clear_of_primitives(const Eigen::Vector3d& p, const std::vector<HumanFrame>& frames,
                         const SkeletonMap& skeleton, const HumanReachParams& reach,
                         double margin) {
  for (const auto& frame : frames) {
    HumanObservation obs;
    obs.frame = frame;
    obs.unobserved.fill(0.0);
    obs.v0.fill(reach.v_max);
    for (const auto& prim : complex_set(obs, 0.0, skeleton, reach)) {
      if (signed_distance(prim, p) < margin) return false;
    }
  }
  return true;
}

}  // namespace

std::vector<Scenario> gen_scenarios(const GenConfig& config) {
  if (config.n < 1) throw std::invalid_argument("gen_scenarios: n must be at least 1");
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  // One controller per generation run; the feasibility probe needs its
  // stacked dynamics and reach table.
  Controller probe(config.controller);
  const SkeletonMap& skeleton = probe.skeleton();
  const HumanReachParams& reach = config.controller.reach;

  std::vector<Scenario> out;
  out.reserve(config.n);
  for (int i = 0; i < config.n; ++i) {
    bool accepted = false;
    for (int attempt = 0; attempt < config.max_tries && !accepted; ++attempt) {
      Scenario sc;
      sc.seed = config.seed * 1000003ULL + static_cast<std::uint64_t>(i);
      char buf[32];
      std::snprintf(buf, sizeof(buf), "scn-%dh-%04d", config.humans, i);
      sc.name = buf;
      sc.controller = config.controller;
      sc.method = config.method;
      sc.timeout = config.timeout;

      const double dist = config.dist_min + (config.dist_max - config.dist_min) * u01(rng);
      const double azim = 2.0 * M_PI * u01(rng);
      const Eigen::Vector2d dir(std::cos(azim), std::sin(azim));
      const Eigen::Vector2d start_xy = -0.5 * dist * dir;
      const Eigen::Vector2d goal_xy = 0.5 * dist * dir;
      const double z0 = config.alt_min + (config.alt_max - config.alt_min) * u01(rng);
      const double z1 = config.alt_min + (config.alt_max - config.alt_min) * u01(rng);

      sc.x0 = MavState{};
      sc.x0.p = Eigen::Vector3d(start_xy.x(), start_xy.y(), z0);
      sc.x0.yaw = azim;
      sc.goal = Eigen::Vector3d(goal_xy.x(), goal_xy.y(), z1);

      for (int h = 0; h < config.humans; ++h) {
        // Crossing walker: path intersects the start-goal segment, timed to
        // the expected MAV transit plus jitter. A share of near-head-on
        // headings keeps the conflict family diverse.
        const double frac = 0.35 + 0.3 * u01(rng);
        const Eigen::Vector2d cross_xy = start_xy + frac * (goal_xy - start_xy);
        double rel_angle;
        if (u01(rng) < 0.3) {
          rel_angle = M_PI * (160.0 + 40.0 * u01(rng)) / 180.0;  // head-on band
        } else {
          rel_angle = M_PI * (35.0 + 110.0 * u01(rng)) / 180.0;  // crossing band
        }
        if (u01(rng) < 0.5) rel_angle = -rel_angle;
        const double walker_heading = azim + rel_angle;
        const double speed = config.walker_speed_min +
                             (config.walker_speed_max - config.walker_speed_min) * u01(rng);
        const double t_cross = frac * dist / config.mav_transit_speed +
                               config.cross_jitter * (2.0 * u01(rng) - 1.0);
        const Eigen::Vector2d walker_dir(std::cos(walker_heading), std::sin(walker_heading));
        const Eigen::Vector2d walker_start =
            cross_xy - walker_dir * (speed * std::max(t_cross, 0.5));

        HumanSpec spec;
        SyntheticWalker w;
        w.speed = speed;
        w.heading = walker_heading;
        w.duration = config.timeout + 10.0;
        w.rate = 30.0;
        w.seed = sc.seed * 31ULL + static_cast<std::uint64_t>(h);
        spec.synthetic = w;
        spec.offset = Eigen::Vector3d(walker_start.x(), walker_start.y(), 0.0);
        sc.humans.push_back(spec);
      }

      // Validation: start/goal clear of the t=0 primitives and the initial
      // safety rows feasible under the control box.
      std::vector<HumanFrame> frames0;
      for (const auto& h : sc.humans) {
        frames0.push_back(load_human(h).frames.front());
      }
      if (!clear_of_primitives(sc.x0.p, frames0, skeleton, reach,
                               config.clearance_margin) ||
          !clear_of_primitives(*sc.goal, frames0, skeleton, reach,
                               config.clearance_margin)) {
        continue;
      }
      std::vector<ConstraintRow> rows;
      bool rows_ok = true;
      for (size_t h = 0; h < frames0.size(); ++h) {
        HumanObservation obs =
            HumanObservation::from_history({frames0[h]}, frames0[h].t, reach);
        const HumanReachableSet hset =
            hybrid_set(obs, sc.controller.T, sc.controller.Ts, skeleton, reach);
        auto r = build_rows(sc.x0.to_vector(), probe.reach_table(), hset,
                            sc.controller.epsilon, static_cast<int>(h) * 100);
        rows.insert(rows.end(), r.begin(), r.end());
      }
      if (rows_ok) {
        const SafetyReport report =
            check_feasible(rows, sc.controller.bounds, sc.controller.epsilon);
        if (!report.feasible_under_bounds) continue;
      }
      out.push_back(std::move(sc));
      accepted = true;
    }
    if (!accepted) {
      throw std::runtime_error("scenario-space error: rejection sampling exhausted");
    }
  }
  return out;
}

}  // namespace reachmpc::harness
