#pragma once

#include <Eigen/Dense>

namespace reachmpc {

/// Centrally symmetric set {c + G xi, ||xi||_inf <= 1}.
struct Zonotope {
  Eigen::VectorXd c;
  Eigen::MatrixXd G;  ///< dim x num_generators, zero columns allowed

  int dim() const { return static_cast<int>(c.size()); }
  int num_generators() const { return static_cast<int>(G.cols()); }
};

/// Support function sup_{x in Z} n'x = n'c + ||G'n||_1.
/// Throws std::invalid_argument for a zero or non-finite direction.
double support(const Zonotope& z, const Eigen::VectorXd& n);

}  // namespace reachmpc
