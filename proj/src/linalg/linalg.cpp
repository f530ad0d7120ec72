#include "cdyn/linalg.hpp"

namespace cdyn {

std::vector<Eigen::Index> independent_rows(const MatrixXd& a, double rel_tol) {
  std::vector<Eigen::Index> picked;
  if (a.size() == 0) return picked;
  double scale = a.rowwise().norm().maxCoeff();
  if (scale == 0.0) return picked;
  std::vector<VectorXd> basis;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    VectorXd r = a.row(i).transpose();
    // Two Gram-Schmidt passes keep the residual orthogonal to working precision.
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) r -= b.dot(r) * b;
    }
    double norm = r.norm();
    if (norm > rel_tol * scale) {
      basis.push_back(r / norm);
      picked.push_back(i);
    }
  }
  return picked;
}

}  // namespace cdyn
