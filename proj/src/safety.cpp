#include "reachmpc/safety.hpp"

#include <limits>
#include <stdexcept>

#include "reachmpc/qp.hpp"

namespace reachmpc {

namespace {
constexpr double kPruneSlack = 10.0;  // meters; far beyond any 1 s displacement
}

std::vector<ConstraintRow> build_rows(const StateVec& x0, const MavReachTable& table,
                                      const HumanReachableSet& hset, double epsilon,
                                      int id_offset) {
  if (epsilon <= 0.0) throw std::invalid_argument("build_rows: epsilon must be positive");
  const int T = static_cast<int>(hset.steps.size());
  if (T > table.T) throw std::invalid_argument("build_rows: horizon exceeds table");
  const InputVec uc = table.bounds.center();

  std::vector<ConstraintRow> rows;
  rows.reserve(T * 2);
  for (int k = 1; k <= T; ++k) {
    const auto& phi = table.phi_pos[k - 1];
    const auto& g0 = table.gamma0_pos[k - 1];
    const Eigen::Vector3d phi_x0 = phi * x0;
    // Hyperplane anchor: center of the unconditioned reachable set.
    const Eigen::Vector3d center = phi_x0 + g0 * uc + table.tail_center[k - 1];

    int prim_idx = 0;
    for (const auto& prim : hset.steps[k - 1]) {
      const ClosestPoint cp = closest_point_normal(prim, center);
      const Eigen::Vector3d& n = cp.normal;
      double ext = 0.0;
      if (k > 1) ext = (table.gen_pos[k - 1].transpose() * n).lpNorm<1>();

      ConstraintRow row;
      row.a = g0.transpose() * n;
      row.b = epsilon + n.dot(cp.point) - n.dot(phi_x0) -
              n.dot(table.tail_center[k - 1]) - ext;
      row.k = k;
      row.primitive_id = id_offset + prim_idx;
      ++prim_idx;

      if (row.a.dot(uc) - row.b > kPruneSlack) continue;
      rows.push_back(row);
    }
  }
  return rows;
}

std::vector<ConstraintRow> build_rows(const StateVec& x0, const StackedDynamics& stacked,
                                      const HumanReachableSet& hset,
                                      const ControlBounds& bounds, double epsilon,
                                      int id_offset) {
  return build_rows(x0, MavReachTable::build(stacked, bounds), hset, epsilon, id_offset);
}

SafetyReport check_feasible(const std::vector<ConstraintRow>& rows,
                            const ControlBounds& bounds, double epsilon) {
  SafetyReport report;
  report.rows = rows;
  report.epsilon = epsilon;
  if (rows.empty()) {
    report.feasible_under_bounds = true;
    report.witness = bounds.center();
    report.has_witness = true;
    return report;
  }
  for (const auto& row : rows) {
    if (!row.a.allFinite() || !std::isfinite(row.b)) {
      throw std::invalid_argument("check_feasible: non-finite row");
    }
  }

  // Box vertices first.
  for (int mask = 0; mask < 8; ++mask) {
    InputVec u;
    for (int i = 0; i < 3; ++i) {
      u(i) = (mask & (1 << i)) ? bounds.u_max(i) : bounds.u_min(i);
    }
    bool ok = true;
    for (const auto& row : rows) {
      if (row.a.dot(u) < row.b) {
        ok = false;
        break;
      }
    }
    if (ok) {
      report.feasible_under_bounds = true;
      report.witness = u;
      report.has_witness = true;
      return report;
    }
  }

  // Max-min slack LP over (u, delta): maximize delta s.t. a'u - delta >= b.
  // Tiny quadratic regularization keeps the solve well conditioned; the
  // warm start below is feasible by construction so no restoration runs.
  const int m = static_cast<int>(rows.size());
  QuadraticProgram lp;
  lp.H = 1e-6 * Eigen::MatrixXd::Identity(4, 4);
  lp.g = Eigen::VectorXd::Zero(4);
  lp.g(3) = -1.0;
  lp.lb.resize(4);
  lp.ub.resize(4);
  lp.lb.head<3>() = bounds.u_min;
  lp.ub.head<3>() = bounds.u_max;
  lp.lb(3) = -1e6;
  lp.ub(3) = 1e6;
  lp.A_ineq.setZero(m, 4);
  lp.b_ineq.resize(m);
  for (int i = 0; i < m; ++i) {
    lp.A_ineq.row(i).head<3>() = rows[i].a.transpose();
    lp.A_ineq(i, 3) = -1.0;
    lp.b_ineq(i) = rows[i].b;
  }
  Eigen::VectorXd start(4);
  start.head<3>() = bounds.center();
  double delta0 = std::numeric_limits<double>::infinity();
  for (int i = 0; i < m; ++i) {
    delta0 = std::min(delta0, rows[i].a.dot(bounds.center()) - rows[i].b);
  }
  start(3) = std::max(-1e6, delta0 - 1e-6);
  const QpSolution sol = solve_qp(lp, start);
  const Eigen::Vector3d u_star = sol.z.head<3>();

  double delta_true = std::numeric_limits<double>::infinity();
  for (int i = 0; i < m; ++i) {
    delta_true = std::min(delta_true, rows[i].a.dot(u_star) - rows[i].b);
  }
  report.witness = u_star;
  report.has_witness = true;
  report.feasible_under_bounds = delta_true >= -1e-9;
  if (!report.feasible_under_bounds) {
    for (int i = 0; i < m; ++i) {
      if (rows[i].a.dot(u_star) - rows[i].b < -1e-9) {
        report.violated_rows.push_back(i);
      }
    }
    report.has_witness = false;
  }
  return report;
}

Eigen::Vector3d soften(const std::vector<ConstraintRow>& violated_rows, double lambda) {
  if (violated_rows.empty()) {
    throw std::invalid_argument("soften: no violated rows");
  }
  Eigen::Vector3d grad = Eigen::Vector3d::Zero();
  for (const auto& row : violated_rows) grad -= lambda * row.a;
  return grad;
}

}  // namespace reachmpc
