#pragma once

// Dense helpers shared by the model, brackets and dynamics modules. The
// templated routines run on double and on nested Dual scalars; pivoting and
// rank decisions are always made on the value part.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "cdyn/dual.hpp"
#include "cdyn/error.hpp"

namespace Eigen {
template <class T>
struct NumTraits<cdyn::Dual<T>> : NumTraits<double> {
  using Real = cdyn::Dual<T>;
  using NonInteger = cdyn::Dual<T>;
  using Nested = cdyn::Dual<T>;
  using Literal = double;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 2 * NumTraits<T>::ReadCost,
    AddCost = 2 * NumTraits<T>::AddCost,
    MulCost = 3 * NumTraits<T>::MulCost + NumTraits<T>::AddCost,
  };
};
}  // namespace Eigen

namespace cdyn {

template <class T>
using VecT = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <class T>
using MatT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

using Eigen::MatrixXd;
using Eigen::VectorXd;

template <class T>
MatrixXd values_of(const MatT<T>& m) {
  MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out(i, j) = value_of(m(i, j));
  return out;
}
template <class T>
VectorXd values_of(const VecT<T>& v) {
  VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = value_of(v(i));
  return out;
}

template <class T>
VecT<T> lift(const VectorXd& v) {
  VecT<T> out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = T(v(i));
  return out;
}

/// Solves M X = B by Gaussian elimination with partial pivoting on values.
template <class T>
MatT<T> lu_solve(MatT<T> m, MatT<T> b) {
  const Eigen::Index n = m.rows();
  using std::abs;
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index piv = k;
    double best = std::abs(value_of(m(k, k)));
    for (Eigen::Index i = k + 1; i < n; ++i) {
      double c = std::abs(value_of(m(i, k)));
      if (c > best) {
        best = c;
        piv = i;
      }
    }
    if (best == 0.0) throw NumericalError("lu_solve: singular matrix");
    if (piv != k) {
      m.row(k).swap(m.row(piv));
      b.row(k).swap(b.row(piv));
    }
    for (Eigen::Index i = k + 1; i < n; ++i) {
      if (exactly_zero(m(i, k))) continue;
      T factor = m(i, k) / m(k, k);
      for (Eigen::Index j = k; j < n; ++j) m(i, j) -= factor * m(k, j);
      for (Eigen::Index j = 0; j < b.cols(); ++j) b(i, j) -= factor * b(k, j);
    }
  }
  for (Eigen::Index k = n - 1; k >= 0; --k) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      T s = b(k, j);
      for (Eigen::Index i = k + 1; i < n; ++i) s -= m(k, i) * b(i, j);
      b(k, j) = s / m(k, k);
    }
  }
  return b;
}

template <class T>
VecT<T> lu_solve(const MatT<T>& m, const VecT<T>& b) {
  MatT<T> bb = b;
  return lu_solve<T>(m, bb).col(0);
}

/// Singular values of a double matrix.
inline VectorXd singular_values(const MatrixXd& m) {
  if (m.size() == 0) return VectorXd();
  return Eigen::JacobiSVD<MatrixXd>(m).singularValues();
}

/// 2-norm condition number; +inf for singular matrices.
inline double condition_number(const MatrixXd& m) {
  VectorXd s = singular_values(m);
  if (s.size() == 0) return 1.0;
  double smin = s(s.size() - 1);
  if (smin == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / smin;
}

/// Moore-Penrose pseudoinverse by SVD; singular values below rel_tol*sigma_max count as zero.
inline MatrixXd pseudo_inverse(const MatrixXd& a, double rel_tol = 1e-12) {
  if (a.size() == 0) return MatrixXd::Zero(a.cols(), a.rows());
  Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const VectorXd& s = svd.singularValues();
  MatrixXd sinv = MatrixXd::Zero(a.cols(), a.rows());
  double cutoff = s.size() ? rel_tol * s(0) : 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff && s(i) > 0.0) sinv(i, i) = 1.0 / s(i);
  }
  return svd.matrixV() * sinv * svd.matrixU().transpose();
}

/// Indices of a maximal linearly independent subset of rows (greedy
/// Gram-Schmidt on values; a row is dependent when its residual norm falls
/// below rel_tol times the largest row norm).
std::vector<Eigen::Index> independent_rows(const MatrixXd& a, double rel_tol = 1e-12);

/// Moore-Penrose pseudoinverse on generic scalars, via a rank factorization
/// A = C R with R a maximal independent row subset:
/// A+ = R^T (R R^T)^-1 (C^T C)^-1 C^T.
template <class T>
MatT<T> pseudo_inverse_t(const MatT<T>& a) {
  const Eigen::Index m = a.rows();
  const Eigen::Index n = a.cols();
  auto rows = independent_rows(values_of<T>(a));
  if (rows.empty()) return MatT<T>::Constant(n, m, T(0.0));
  const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
  MatT<T> rr(r, n);
  for (Eigen::Index i = 0; i < r; ++i) rr.row(i) = a.row(rows[static_cast<std::size_t>(i)]);
  MatT<T> rrt = rr * rr.transpose();
  // R+ = R^T (R R^T)^-1
  MatT<T> eye = MatT<T>::Identity(r, r);
  MatT<T> rrt_inv = lu_solve<T>(rrt, eye);
  MatT<T> r_pinv = rr.transpose() * rrt_inv;
  if (r == m) return r_pinv;
  MatT<T> c = a * r_pinv;  // m x r
  MatT<T> ctc = c.transpose() * c;
  MatT<T> c_pinv = lu_solve<T>(ctc, MatT<T>(c.transpose()));
  return r_pinv * c_pinv;
}

}  // namespace cdyn
