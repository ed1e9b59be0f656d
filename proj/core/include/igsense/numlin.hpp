#pragma once

#include <Eigen/Dense>

#include "igsense/errors.hpp"

namespace igsense {

/// Dense symmetric matrix. The wrapped storage is symmetrized exactly on
/// construction so entries(i,j) == entries(j,i) bit-for-bit.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(const Eigen::MatrixXd& m);

  static SymMatrix Zero(int n) { return SymMatrix(Eigen::MatrixXd::Zero(n, n)); }
  static SymMatrix Identity(int n) {
    return SymMatrix(Eigen::MatrixXd::Identity(n, n));
  }
  static SymMatrix Diagonal(const Eigen::VectorXd& d) {
    return SymMatrix(Eigen::MatrixXd(d.asDiagonal()));
  }

  int dim() const { return static_cast<int>(m_.rows()); }
  const Eigen::MatrixXd& mat() const { return m_; }
  double trace() const { return m_.trace(); }

 private:
  Eigen::MatrixXd m_;
};

/// Eigenpairs of a symmetric matrix, eigenvalues sorted descending and each
/// eigenvector sign-fixed so its first component of magnitude > 1e-12 is
/// positive. Columns of `eigenvectors` align with `eigenvalues`.
struct EigenDecomposition {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;
};

EigenDecomposition eig_sym(const SymMatrix& s);

/// max |eigenvalue|.
double spectral_norm(const SymMatrix& s);

/// Count of eigenvalues with |lambda| > tol * max(1, lambda_max).
int numeric_rank(const SymMatrix& s, double tol = 1e-8);

/// Natural log of the product of eigenvalues above tol * max(1, lambda_max).
/// Returns -inf when no eigenvalue clears the threshold. Throws NotPSD when
/// an eigenvalue is below -tol * max(1, lambda_max).
double ellipsoid_volume_log(const SymMatrix& s, double tol = 1e-8);

/// Regularized lower incomplete gamma P(a, x).
double regularized_gamma_p(double a, double x);

/// Quantile of the chi-squared distribution with n degrees of freedom,
/// solved by bisection on the regularized incomplete gamma to 1e-10.
double chi2_quantile(int n, double p);

namespace detail {
void require_finite(const Eigen::MatrixXd& m, const char* what);
}

}  // namespace igsense
