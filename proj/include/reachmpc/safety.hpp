#pragma once

#include <vector>

#include "reachmpc/human_reach.hpp"
#include "reachmpc/reach.hpp"

namespace reachmpc {

/// One linear non-containment inequality a'u0 >= b at horizon step k
/// against human primitive i. Coefficients are independent of u0.
struct ConstraintRow {
  Eigen::Vector3d a;
  double b = 0.0;
  int k = 0;
  int primitive_id = 0;
};

struct SafetyReport {
  std::vector<ConstraintRow> rows;
  bool feasible_under_bounds = true;
  std::vector<int> violated_rows;  ///< indices into rows, jointly unsatisfiable
  double epsilon = 0.0;
  Eigen::Vector3d witness = Eigen::Vector3d::Zero();  ///< feasible u0 when found
  bool has_witness = false;
};

/// Rows for every (step, primitive) pair. The supporting hyperplane is taken
/// at the nearest boundary point to the unconditioned reachable-set center;
/// rows with more than 10 m of slack at the box center are pruned.
std::vector<ConstraintRow> build_rows(const StateVec& x0, const MavReachTable& table,
                                      const HumanReachableSet& hset, double epsilon,
                                      int id_offset = 0);

/// Convenience overload building the table on the fly (test/diagnostic path).
std::vector<ConstraintRow> build_rows(const StateVec& x0, const StackedDynamics& stacked,
                                      const HumanReachableSet& hset,
                                      const ControlBounds& bounds, double epsilon,
                                      int id_offset = 0);

/// Exact feasibility decision of the rows against the control box: the 8 box
/// vertices first, then a max-min-slack LP when no vertex works.
SafetyReport check_feasible(const std::vector<ConstraintRow>& rows,
                            const ControlBounds& bounds, double epsilon);

/// Linear objective contribution -lambda * sum(a) on u0 replacing the
/// violated hard rows; added to the minimized objective.
Eigen::Vector3d soften(const std::vector<ConstraintRow>& violated_rows, double lambda);

}  // namespace reachmpc
