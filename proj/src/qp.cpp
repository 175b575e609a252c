#include "reachmpc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace reachmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void validate(const QuadraticProgram& qp) {
  const int n = qp.n();
  if (qp.H.rows() != n || qp.H.cols() != n) {
    throw std::invalid_argument("qp: Hessian dimension mismatch");
  }
  if (qp.lb.size() != n || qp.ub.size() != n) {
    throw std::invalid_argument("qp: bound dimension mismatch");
  }
  if (qp.m() > 0 && (qp.A_ineq.rows() != qp.m() || qp.A_ineq.cols() != n)) {
    throw std::invalid_argument("qp: inequality dimension mismatch");
  }
  if (!qp.H.allFinite() || !qp.g.allFinite()) {
    throw std::invalid_argument("qp: non-finite objective data");
  }
  if (qp.m() > 0 && (!qp.A_ineq.allFinite() || !qp.b_ineq.allFinite())) {
    throw std::invalid_argument("qp: non-finite constraint data");
  }
  for (int i = 0; i < n; ++i) {
    if (std::isnan(qp.lb(i)) || std::isnan(qp.ub(i)) || qp.lb(i) > qp.ub(i)) {
      throw std::invalid_argument("qp: invalid bounds");
    }
  }
}

/// Unified row form C z >= d covering general rows and finite box sides.
struct RowSet {
  Eigen::MatrixXd C;
  Eigen::VectorXd d;
  // Row r origin: r < m is A_ineq row r; otherwise (kind, var) below.
  int m = 0;
  std::vector<int> lb_var;  // rows m .. m+|lb|-1
  std::vector<int> ub_var;  // following rows
};

RowSet build_rows(const QuadraticProgram& qp) {
  const int n = qp.n();
  const int m = qp.m();
  RowSet rs;
  rs.m = m;
  for (int i = 0; i < n; ++i) {
    if (qp.lb(i) > -kInf) rs.lb_var.push_back(i);
  }
  for (int i = 0; i < n; ++i) {
    if (qp.ub(i) < kInf) rs.ub_var.push_back(i);
  }
  const int total = m + static_cast<int>(rs.lb_var.size() + rs.ub_var.size());
  rs.C.setZero(total, n);
  rs.d.resize(total);
  if (m > 0) {
    rs.C.topRows(m) = qp.A_ineq;
    rs.d.head(m) = qp.b_ineq;
  }
  int r = m;
  for (int i : rs.lb_var) {
    rs.C(r, i) = 1.0;
    rs.d(r) = qp.lb(i);
    ++r;
  }
  for (int i : rs.ub_var) {
    rs.C(r, i) = -1.0;
    rs.d(r) = -qp.ub(i);
    ++r;
  }
  return rs;
}

struct CoreResult {
  Eigen::VectorXd z;
  Eigen::VectorXd lambda;  // per unified row, zero if inactive
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
};

/// Primal active-set iteration from a feasible start. H must be positive
/// definite (callers regularize first). Rows entering the working set stay
/// linearly independent because a blocking row satisfies c'p != 0 while
/// C_W p = 0.
CoreResult solve_core(const Eigen::LLT<Eigen::MatrixXd>& Hfac, const Eigen::MatrixXd& H,
                      const Eigen::VectorXd& g, const RowSet& rs, Eigen::VectorXd z,
                      int max_iter, bool record_trace,
                      const std::vector<int>& seed_working_set = {}) {
  const int n = static_cast<int>(z.size());
  const int nrows = static_cast<int>(rs.d.size());
  constexpr double kStepTol = 1e-9;
  constexpr double kMultTol = 1e-9;
  constexpr double kDirTol = 1e-12;

  std::vector<int> W = seed_working_set;
  if (static_cast<int>(W.size()) > n - 1) W.resize(n - 1);
  W.reserve(n);
  CoreResult res;
  res.lambda.setZero(nrows);

  auto objective = [&](const Eigen::VectorXd& v) {
    return 0.5 * v.dot(H * v) + g.dot(v);
  };

  // H^{-1} c_r columns, computed once per row on demand.
  std::vector<Eigen::VectorXd> hc_cache(nrows);
  std::vector<bool> hc_ready(nrows, false);
  auto hc_col = [&](int r) -> const Eigen::VectorXd& {
    if (!hc_ready[r]) {
      hc_cache[r] = Hfac.solve(rs.C.row(r).transpose());
      hc_ready[r] = true;
    }
    return hc_cache[r];
  };

  // After a full unblocked step the iterate is the EQP optimum for W, so the
  // next iteration goes straight to the multiplier test; recomputing the
  // step there only measures cancellation noise.
  bool at_subproblem_optimum = false;
  // A just-dropped row may only re-enter through a genuine step. Noise-scale
  // directions otherwise re-add a linearly dependent row forever.
  int tabu_row = -1;
  // Near-degenerate active sets produce unreliable multiplier signs; a row
  // repeatedly dropped and re-blocked is frozen in place and the final KKT
  // check arbitrates.
  std::vector<int> drop_count(nrows, 0);

  for (int iter = 0; iter < max_iter; ++iter) {
    ++res.iterations;
    if (record_trace) res.trace.push_back(objective(z));

    const Eigen::VectorXd grad = H * z + g;
    const int w = static_cast<int>(W.size());
    Eigen::VectorXd p;
    Eigen::VectorXd nu;
    if (w == 0) {
      p = -Hfac.solve(grad);
    } else {
      // Schur solve of the EQP system H p + C' mu = -grad, C p = 0, followed
      // by iterative refinement: the plain difference -hg + Y nu loses
      // accuracy to cancellation when H is ill conditioned.
      Eigen::MatrixXd Cw(w, n);
      Eigen::MatrixXd Y(n, w);
      for (int i = 0; i < w; ++i) {
        Cw.row(i) = rs.C.row(W[i]);
        Y.col(i) = hc_col(W[i]);
      }
      const Eigen::VectorXd hg = Hfac.solve(grad);
      Eigen::MatrixXd S = Cw * Y;
      S.diagonal().array() += 1e-14;  // guards near-singular Schur complements
      const Eigen::LDLT<Eigen::MatrixXd> Sfac(S);
      nu = Sfac.solve(Cw * hg);
      p = -hg + Y * nu;
      const double res_scale = 1.0 + grad.lpNorm<Eigen::Infinity>();
      for (int refine = 0; refine < 2; ++refine) {
        const Eigen::VectorXd r1 = -grad - H * p + Cw.transpose() * nu;
        const Eigen::VectorXd r2 = -(Cw * p);
        if (std::max(r1.lpNorm<Eigen::Infinity>(), r2.lpNorm<Eigen::Infinity>()) <
            1e-13 * res_scale) {
          break;
        }
        const Eigen::VectorXd hr = Hfac.solve(r1);
        const Eigen::VectorXd dnu = -Sfac.solve(Cw * hr - r2);
        p += hr + Y * dnu;
        nu += dnu;
      }
    }

    const double pnorm = p.lpNorm<Eigen::Infinity>();
    const double step_floor = kStepTol * (1.0 + z.lpNorm<Eigen::Infinity>());
    bool do_check = at_subproblem_optimum || pnorm <= step_floor;
    at_subproblem_optimum = false;
    if (do_check) {
      // Exact EQP solve on the working set: snaps the iterate onto the
      // subproblem optimum and yields trustworthy multiplier signs. Row
      // drops only happen from an accepted snap; dropping away from the
      // subproblem optimum invites add/drop cycling.
      Eigen::VectorXd lambda_w(w);
      Eigen::VectorXd z_eqp;
      bool eqp_ok = false;
      {
        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + w, n + w);
        Eigen::VectorXd rhs(n + w);
        K.topLeftCorner(n, n) = H;
        for (int i = 0; i < w; ++i) {
          K.block(n + i, 0, 1, n) = rs.C.row(W[i]);
          K.block(0, n + i, n, 1) = rs.C.row(W[i]).transpose();
          rhs(n + i) = rs.d(W[i]);
        }
        rhs.head(n) = -g;
        const Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
        Eigen::VectorXd kkt_sol = lu.solve(rhs);
        kkt_sol += lu.solve(rhs - K * kkt_sol);  // one refinement pass
        if ((K * kkt_sol - rhs).cwiseAbs().maxCoeff() <
            1e-8 * (1.0 + rhs.cwiseAbs().maxCoeff())) {
          eqp_ok = true;
          z_eqp = kkt_sol.head(n);
          for (int i = 0; i < w; ++i) lambda_w(i) = -kkt_sol(n + i);
        }
      }
      if (!eqp_ok) lambda_w = nu;  // near-dependent working set

      bool snap_feasible = eqp_ok;
      for (int r = 0; snap_feasible && r < nrows; ++r) {
        if (rs.C.row(r).dot(z_eqp) < rs.d(r) - 1e-9) snap_feasible = false;
      }

      if (snap_feasible || pnorm <= step_floor) {
        int drop = -1;
        double most_negative = -kMultTol;
        for (int i = 0; i < w; ++i) {
          if (drop_count[W[i]] >= 3) continue;
          if (lambda_w(i) < most_negative) {
            most_negative = lambda_w(i);
            drop = i;
          }
        }
        if (snap_feasible) z = z_eqp;
        if (drop < 0) {
          if (eqp_ok && !snap_feasible) {
            // Multipliers clean but the subproblem optimum violates an
            // unlisted row: that row belongs in the working set.
            int worst = -1;
            double worst_violation = 1e-9;
            for (int r = 0; r < nrows; ++r) {
              if (std::find(W.begin(), W.end(), r) != W.end()) continue;
              const double v = rs.d(r) - rs.C.row(r).dot(z_eqp);
              if (v > worst_violation) {
                worst_violation = v;
                worst = r;
              }
            }
            if (worst >= 0 && static_cast<int>(W.size()) < n) {
              W.push_back(worst);
              continue;
            }
          }
          for (int i = 0; i < w; ++i) res.lambda(W[i]) = std::max(lambda_w(i), 0.0);
          res.converged = true;
          break;
        }
        tabu_row = W[drop];
        ++drop_count[W[drop]];
        W.erase(W.begin() + drop);
        continue;
      }
      // Snap rejected with a usable step direction: keep stepping instead.
    }

    // Ratio test over rows not in the working set.
    const bool noise_step = pnorm <= 1e-6 * (1.0 + z.lpNorm<Eigen::Infinity>());
    double alpha = 1.0;
    int blocking = -1;
    for (int r = 0; r < nrows; ++r) {
      if (r == tabu_row && noise_step) continue;
      if (std::find(W.begin(), W.end(), r) != W.end()) continue;
      const double dir = rs.C.row(r).dot(p);
      if (dir >= -kDirTol) continue;
      const double slack = rs.C.row(r).dot(z) - rs.d(r);
      const double a = std::max(0.0, slack) / (-dir);
      if (a < alpha) {
        alpha = a;
        blocking = r;
      }
    }
    tabu_row = -1;
    z += alpha * p;
    if (blocking >= 0) {
      if (static_cast<int>(W.size()) < n) {
        W.push_back(blocking);
      }
    } else {
      at_subproblem_optimum = true;  // took the full step
    }
  }
  res.z = std::move(z);
  return res;
}

Eigen::LLT<Eigen::MatrixXd> factor_regularized(Eigen::MatrixXd& H) {
  // Min-eigenvalue estimate from LDLT diagonal; regularize semidefinite
  // tracking Hessians so the core factorization is positive definite.
  Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
  const double dmin = ldlt.vectorD().minCoeff();
  double reg = 0.0;
  if (!(dmin >= 1e-9)) reg = 1e-8;
  for (int attempt = 0; attempt < 8; ++attempt) {
    Eigen::MatrixXd Hr = H;
    if (reg > 0.0) Hr.diagonal().array() += reg;
    Eigen::LLT<Eigen::MatrixXd> llt(Hr);
    if (llt.info() == Eigen::Success) {
      H = Hr;
      return llt;
    }
    reg = (reg == 0.0) ? 1e-8 : reg * 100.0;
  }
  throw std::invalid_argument("qp: Hessian is not positive semidefinite");
}

}  // namespace

QuadraticProgram QuadraticProgram::unconstrained(Eigen::MatrixXd H, Eigen::VectorXd g) {
  QuadraticProgram qp;
  const int n = static_cast<int>(g.size());
  qp.H = std::move(H);
  qp.g = std::move(g);
  qp.lb = Eigen::VectorXd::Constant(n, -kInf);
  qp.ub = Eigen::VectorXd::Constant(n, kInf);
  qp.A_ineq.resize(0, n);
  qp.b_ineq.resize(0);
  return qp;
}

double qp_objective(const QuadraticProgram& qp, const Eigen::VectorXd& z) {
  return 0.5 * z.dot(qp.H * z) + qp.g.dot(z);
}

double kkt_residual(const QuadraticProgram& qp, const Eigen::VectorXd& z,
                    const QpMultipliers& mult) {
  const int n = qp.n();
  const int m = qp.m();
  Eigen::VectorXd stationarity = qp.H * z + qp.g;
  if (m > 0) stationarity -= qp.A_ineq.transpose() * mult.ineq;
  stationarity -= mult.lower;
  stationarity += mult.upper;
  double r = stationarity.lpNorm<Eigen::Infinity>();

  for (int i = 0; i < m; ++i) {
    const double slack = qp.A_ineq.row(i).dot(z) - qp.b_ineq(i);
    r = std::max(r, -slack);                        // primal
    r = std::max(r, -mult.ineq(i));                 // dual
    r = std::max(r, std::abs(mult.ineq(i) * slack));  // complementarity
  }
  for (int i = 0; i < n; ++i) {
    if (qp.lb(i) > -kInf) {
      const double slack = z(i) - qp.lb(i);
      r = std::max(r, -slack);
      r = std::max(r, -mult.lower(i));
      r = std::max(r, std::abs(mult.lower(i) * slack));
    }
    if (qp.ub(i) < kInf) {
      const double slack = qp.ub(i) - z(i);
      r = std::max(r, -slack);
      r = std::max(r, -mult.upper(i));
      r = std::max(r, std::abs(mult.upper(i) * slack));
    }
  }
  return r;
}

namespace {

QpSolution solve_qp_scaled(const QuadraticProgram& qp,
                           const std::optional<Eigen::VectorXd>& warm_start,
                           const QpSettings& settings) {
  const int n = qp.n();
  const int m = qp.m();

  Eigen::VectorXd z0 = warm_start.value_or(Eigen::VectorXd::Zero(n));
  if (z0.size() != n) throw std::invalid_argument("qp: warm start dimension mismatch");
  for (int i = 0; i < n; ++i) {
    z0(i) = std::clamp(z0(i), qp.lb(i), qp.ub(i));
  }

  QpSolution sol;
  sol.multipliers.ineq.setZero(m);
  sol.multipliers.lower.setZero(n);
  sol.multipliers.upper.setZero(n);

  // Rows violated at the clamped start get an exact-penalty slack; every
  // other row stays hard, so the extended start is feasible by construction.
  std::vector<int> slack_rows;
  Eigen::VectorXd viol0 = Eigen::VectorXd::Zero(m);
  if (m > 0) {
    viol0 = qp.b_ineq - qp.A_ineq * z0;
    for (int i = 0; i < m; ++i) {
      if (viol0(i) > settings.tol_feas) slack_rows.push_back(i);
    }
  }

  auto active_at = [](const RowSet& rows, const Eigen::VectorXd& at) {
    std::vector<int> seed;
    for (int r = 0; r < rows.d.size(); ++r) {
      if (std::abs(rows.C.row(r).dot(at) - rows.d(r)) <=
          1e-9 * (1.0 + std::abs(rows.d(r)))) {
        seed.push_back(r);
      }
    }
    return seed;
  };

  if (!slack_rows.empty()) {
    // Restoration: min 0.5 z'Hz + g'z + W 1's + 0.5 s's s.t. Az + Es >= b,
    // s >= 0, box. With W above the optimal row multipliers the penalty is
    // exact, so s* = 0 recovers a feasible point of the original problem.
    // Escalate W before declaring the problem infeasible.
    const int ns = static_cast<int>(slack_rows.size());
    const int nv = n + ns;
    QuadraticProgram ext;
    ext.H = Eigen::MatrixXd::Zero(nv, nv);
    ext.H.topLeftCorner(n, n) = qp.H;
    ext.H.bottomRightCorner(ns, ns).setIdentity();
    ext.g.resize(nv);
    ext.g.head(n) = qp.g;
    ext.lb.resize(nv);
    ext.ub.resize(nv);
    ext.lb.head(n) = qp.lb;
    ext.ub.head(n) = qp.ub;
    ext.lb.tail(ns).setZero();
    ext.ub.tail(ns).setConstant(kInf);
    ext.A_ineq.setZero(m, nv);
    ext.A_ineq.leftCols(n) = qp.A_ineq;
    for (int i = 0; i < ns; ++i) ext.A_ineq(slack_rows[i], n + i) = 1.0;
    ext.b_ineq = qp.b_ineq;

    Eigen::VectorXd start(nv);
    start.head(n) = z0;
    for (int i = 0; i < ns; ++i) start(n + i) = std::max(0.0, viol0(slack_rows[i]));

    Eigen::MatrixXd Hr = ext.H;
    const auto fac = factor_regularized(Hr);
    const RowSet rows = build_rows(ext);

    CoreResult core;
    bool recovered = false;
    for (double W : {1e6, 1e8}) {
      ext.g.tail(ns).setConstant(W);
      core = solve_core(fac, Hr, ext.g, rows, start, settings.max_iter, false,
                        active_at(rows, start));
      sol.iterations += core.iterations;
      const double viol =
          std::max(0.0, (qp.b_ineq - qp.A_ineq * core.z.head(n)).maxCoeff());
      if (viol <= settings.tol_feas) {
        recovered = true;
        break;
      }
      start = core.z;  // escalate from the least-violation point
    }

    if (!recovered) {
      // Residual violation at the converged exact-penalty optimum proves
      // infeasibility; without convergence it only proves iteration starvation.
      sol.z = core.z.head(n);
      sol.status = core.converged ? QpStatus::PrimalInfeasible : QpStatus::MaxIterations;
      sol.max_violation = std::max(0.0, (qp.b_ineq - qp.A_ineq * sol.z).maxCoeff());
      sol.kkt_residual = kkt_residual(qp, sol.z, sol.multipliers);
      return sol;
    }
    z0 = core.z.head(n);
    for (int i = 0; i < n; ++i) z0(i) = std::clamp(z0(i), qp.lb(i), qp.ub(i));
  }

  {
    Eigen::MatrixXd Hr = qp.H;
    const auto fac = factor_regularized(Hr);
    const RowSet rows = build_rows(qp);
    CoreResult core = solve_core(fac, Hr, qp.g, rows, z0, settings.max_iter, true,
                                 active_at(rows, z0));

    sol.z = core.z;
    sol.iterations += core.iterations;
    sol.objective_trace = std::move(core.trace);
    sol.status = core.converged ? QpStatus::Optimal : QpStatus::MaxIterations;
    int r = rows.m;
    if (m > 0) sol.multipliers.ineq = core.lambda.head(m);
    for (int i : rows.lb_var) sol.multipliers.lower(i) = core.lambda(r++);
    for (int i : rows.ub_var) sol.multipliers.upper(i) = core.lambda(r++);
  }

  sol.max_violation = 0.0;
  if (m > 0) {
    sol.max_violation = std::max(0.0, (qp.b_ineq - qp.A_ineq * sol.z).maxCoeff());
  }
  sol.kkt_residual = kkt_residual(qp, sol.z, sol.multipliers);
  if (sol.status == QpStatus::Optimal && sol.kkt_residual > settings.tol_kkt) {
    sol.status = QpStatus::MaxIterations;
  }
  return sol;
}

}  // namespace

QpSolution solve_qp(const QuadraticProgram& qp,
                    const std::optional<Eigen::VectorXd>& warm_start,
                    const QpSettings& settings) {
  validate(qp);
  const int n = qp.n();

  // Jacobi equilibration: the condensed MPC Hessian mixes scales across the
  // horizon badly enough to degrade the active-set linear algebra.
  Eigen::VectorXd d(n);
  for (int i = 0; i < n; ++i) {
    d(i) = 1.0 / std::sqrt(std::max(qp.H(i, i), 1e-10));
  }
  QuadraticProgram sq;
  sq.H = d.asDiagonal() * qp.H * d.asDiagonal();
  sq.g = d.cwiseProduct(qp.g);
  sq.lb = qp.lb.cwiseQuotient(d);
  sq.ub = qp.ub.cwiseQuotient(d);
  sq.A_ineq = qp.A_ineq * d.asDiagonal();
  sq.b_ineq = qp.b_ineq;

  std::optional<Eigen::VectorXd> warm_scaled;
  if (warm_start.has_value()) {
    if (warm_start->size() != n) {
      throw std::invalid_argument("qp: warm start dimension mismatch");
    }
    warm_scaled = warm_start->cwiseQuotient(d);
  }

  QpSolution sol = solve_qp_scaled(sq, warm_scaled, settings);
  sol.z = d.cwiseProduct(sol.z);
  sol.multipliers.lower = sol.multipliers.lower.cwiseQuotient(d);
  sol.multipliers.upper = sol.multipliers.upper.cwiseQuotient(d);

  sol.max_violation = 0.0;
  if (qp.m() > 0) {
    sol.max_violation = std::max(0.0, (qp.b_ineq - qp.A_ineq * sol.z).maxCoeff());
  }
  sol.kkt_residual = kkt_residual(qp, sol.z, sol.multipliers);
  if (sol.status == QpStatus::Optimal && sol.kkt_residual > settings.tol_kkt) {
    sol.status = QpStatus::MaxIterations;
  }
  return sol;
}

}  // namespace reachmpc
