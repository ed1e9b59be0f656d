#include "igsense/numlin.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace igsense {

namespace detail {

void require_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) {
    throw InvalidInput(std::string(what) + " has non-finite entries");
  }
}

}  // namespace detail

SymMatrix::SymMatrix(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) {
    throw InvalidInput("SymMatrix requires a square matrix");
  }
  detail::require_finite(m, "SymMatrix");
  m_ = 0.5 * (m + m.transpose());
  // Force exact symmetry regardless of rounding in the average above.
  for (Eigen::Index i = 0; i < m_.rows(); ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      m_(i, j) = m_(j, i);
    }
  }
}

EigenDecomposition eig_sym(const SymMatrix& s) {
  const int n = s.dim();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(s.mat());
  if (solver.info() != Eigen::Success) {
    throw Error("eig_sym: eigendecomposition failed");
  }

  // Eigen returns ascending order; we want descending with fixed signs.
  EigenDecomposition out;
  out.eigenvalues.resize(n);
  out.eigenvectors.resize(n, n);
  for (int i = 0; i < n; ++i) {
    out.eigenvalues[i] = solver.eigenvalues()[n - 1 - i];
    Eigen::VectorXd v = solver.eigenvectors().col(n - 1 - i);
    for (int r = 0; r < n; ++r) {
      if (std::abs(v[r]) > 1e-12) {
        if (v[r] < 0) v = -v;
        break;
      }
    }
    out.eigenvectors.col(i) = v;
  }
  return out;
}

double spectral_norm(const SymMatrix& s) {
  if (s.dim() == 0) return 0.0;
  const EigenDecomposition ed = eig_sym(s);
  return std::max(std::abs(ed.eigenvalues[0]),
                  std::abs(ed.eigenvalues[s.dim() - 1]));
}

int numeric_rank(const SymMatrix& s, double tol) {
  const EigenDecomposition ed = eig_sym(s);
  const double lmax = s.dim() > 0 ? ed.eigenvalues.cwiseAbs().maxCoeff() : 0.0;
  const double thresh = tol * std::max(1.0, lmax);
  int rank = 0;
  for (int i = 0; i < s.dim(); ++i) {
    if (std::abs(ed.eigenvalues[i]) > thresh) ++rank;
  }
  return rank;
}

double ellipsoid_volume_log(const SymMatrix& s, double tol) {
  const EigenDecomposition ed = eig_sym(s);
  const double lmax = s.dim() > 0 ? ed.eigenvalues.maxCoeff() : 0.0;
  const double thresh = tol * std::max(1.0, lmax);
  double acc = 0.0;
  int count = 0;
  for (int i = 0; i < s.dim(); ++i) {
    const double lam = ed.eigenvalues[i];
    if (lam < -thresh) {
      throw NotPSD("ellipsoid_volume_log: eigenvalue " + std::to_string(lam) +
                   " below PSD tolerance");
    }
    if (lam > thresh) {
      acc += std::log(lam);
      ++count;
    }
  }
  if (count == 0) return -std::numeric_limits<double>::infinity();
  return acc;
}

namespace {

// Series expansion of P(a, x), valid for x < a + 1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < 10000; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a, x) = 1 - P(a, x), valid for x >= a + 1.
double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double regularized_gamma_p(double a, double x) {
  if (a <= 0.0) throw InvalidInput("regularized_gamma_p: a must be positive");
  if (x < 0.0) throw InvalidInput("regularized_gamma_p: x must be nonnegative");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

double chi2_quantile(int n, double p) {
  if (n < 1) throw InvalidInput("chi2_quantile: n must be positive");
  if (!(p > 0.0 && p < 1.0)) {
    throw InvalidInput("chi2_quantile: p must lie in (0,1)");
  }
  const double a = 0.5 * n;
  auto cdf = [a](double q) { return regularized_gamma_p(a, 0.5 * q); };

  double hi = std::max(1.0, static_cast<double>(n));
  while (cdf(hi) < p) hi *= 2.0;
  double lo = 0.0;
  // Bisection to absolute tolerance 1e-10 on the quantile.
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    if (cdf(mid) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace igsense
