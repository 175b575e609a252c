#include "reachmpc/zonotope.hpp"

#include <stdexcept>

namespace reachmpc {

double support(const Zonotope& z, const Eigen::VectorXd& n) {
  if (n.size() != z.c.size() || !n.allFinite() || n.isZero(0.0)) {
    throw std::invalid_argument("support: invalid direction");
  }
  double s = n.dot(z.c);
  if (z.G.cols() > 0) {
    s += (z.G.transpose() * n).lpNorm<1>();
  }
  return s;
}

}  // namespace reachmpc
