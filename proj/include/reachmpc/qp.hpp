#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

namespace reachmpc {

/// Dense convex QP:
///   min 0.5 z'Hz + g'z   s.t.  lb <= z <= ub,  A_ineq z >= b_ineq.
/// Infinite bound entries disable the corresponding box row.
struct QuadraticProgram {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  Eigen::VectorXd lb;
  Eigen::VectorXd ub;
  Eigen::MatrixXd A_ineq;  ///< m x n, may have zero rows
  Eigen::VectorXd b_ineq;

  int n() const { return static_cast<int>(g.size()); }
  int m() const { return static_cast<int>(b_ineq.size()); }

  static QuadraticProgram unconstrained(Eigen::MatrixXd H, Eigen::VectorXd g);
};

enum class QpStatus { Optimal, MaxIterations, PrimalInfeasible };

/// Nonnegative multipliers for the >=-rows and active box sides.
struct QpMultipliers {
  Eigen::VectorXd ineq;   ///< size m
  Eigen::VectorXd lower;  ///< size n
  Eigen::VectorXd upper;  ///< size n
};

struct QpSolution {
  Eigen::VectorXd z;
  QpStatus status = QpStatus::MaxIterations;
  double kkt_residual = 0.0;
  int iterations = 0;
  double max_violation = 0.0;  ///< residual primal infeasibility at z
  QpMultipliers multipliers;
  std::vector<double> objective_trace;  ///< objective per outer iteration
};

struct QpSettings {
  double tol_kkt = 1e-6;
  double tol_feas = 1e-6;
  int max_iter = 500;
};

double qp_objective(const QuadraticProgram& qp, const Eigen::VectorXd& z);

/// Max-norm KKT residual: stationarity, primal feasibility, dual feasibility,
/// and complementary slackness.
double kkt_residual(const QuadraticProgram& qp, const Eigen::VectorXd& z,
                    const QpMultipliers& mult);

/// Primal active-set solve. Throws std::invalid_argument on dimension
/// mismatches or non-finite problem data.
QpSolution solve_qp(const QuadraticProgram& qp,
                    const std::optional<Eigen::VectorXd>& warm_start = std::nullopt,
                    const QpSettings& settings = {});

}  // namespace reachmpc
