#include "igsense/gaussian.hpp"

#include <cmath>
#include <numbers>

namespace igsense {

GaussianModel::GaussianModel(Eigen::VectorXd mean, SymMatrix covariance,
                             double rank_tol,
                             std::optional<int> declared_rank)
    : mean_(std::move(mean)), cov_(std::move(covariance)), rank_tol_(rank_tol) {
  if (mean_.size() != cov_.dim()) {
    throw InvalidInput("GaussianModel: mean/covariance dimension mismatch");
  }
  if (rank_tol_ <= 0.0) {
    throw InvalidInput("GaussianModel: rank_tol must be positive");
  }
  eig_ = eig_sym(cov_);
  const double lmax = cov_.dim() > 0 ? eig_.eigenvalues.maxCoeff() : 0.0;
  const double thresh = rank_tol_ * std::max(1.0, lmax);
  for (int i = 0; i < cov_.dim(); ++i) {
    const double lam = eig_.eigenvalues[i];
    if (lam < -thresh) {
      throw NotPSD("GaussianModel: covariance eigenvalue " +
                   std::to_string(lam) + " below PSD tolerance");
    }
    if (lam > thresh) ++rank_;
  }
  if (declared_rank && *declared_rank != rank_) {
    throw InvalidInput("GaussianModel: declared rank " +
                       std::to_string(*declared_rank) +
                       " does not match numeric rank " + std::to_string(rank_));
  }
}

GaussianModel GaussianModel::zero_mean(SymMatrix covariance, double rank_tol,
                                       std::optional<int> declared_rank) {
  const int n = covariance.dim();
  return GaussianModel(Eigen::VectorXd::Zero(n), std::move(covariance),
                       rank_tol, declared_rank);
}

Eigen::VectorXd sample_signal(const GaussianModel& model, Rng& rng) {
  const int n = model.dim();
  Eigen::VectorXd x = model.mean();
  const auto& eig = model.eigen();
  const double lmax = n > 0 ? eig.eigenvalues.maxCoeff() : 0.0;
  const double thresh = model.rank_tol() * std::max(1.0, lmax);
  for (int i = 0; i < n; ++i) {
    const double lam = eig.eigenvalues[i];
    if (lam <= thresh) continue;  // null and clamped directions get no noise
    x += std::sqrt(lam) * rng.normal() * eig.eigenvectors.col(i);
  }
  return x;
}

GaussianBelief posterior_update(const GaussianBelief& belief,
                                const Eigen::VectorXd& a, double y,
                                double sigma2) {
  if (sigma2 <= 0.0) {
    throw InvalidInput("posterior_update: sigma2 must be positive");
  }
  if (!a.allFinite()) {
    throw InvalidInput("posterior_update: measurement vector not finite");
  }
  if (a.size() != belief.theta.size()) {
    throw InvalidInput("posterior_update: dimension mismatch");
  }
  const Eigen::MatrixXd& gamma = belief.gamma.mat();
  const Eigen::VectorXd ga = gamma * a;
  const double denom = a.dot(ga) + sigma2;
  GaussianBelief out;
  out.theta = belief.theta + ga * ((y - a.dot(belief.theta)) / denom);
  out.gamma = SymMatrix(gamma - (ga * ga.transpose()) / denom);
  return out;
}

SymMatrix posterior_cov_update(const SymMatrix& gamma, const Eigen::VectorXd& a,
                               double sigma2) {
  if (sigma2 <= 0.0) {
    throw InvalidInput("posterior_cov_update: sigma2 must be positive");
  }
  const Eigen::VectorXd ga = gamma.mat() * a;
  const double denom = a.dot(ga) + sigma2;
  return SymMatrix(gamma.mat() - (ga * ga.transpose()) / denom);
}

ModifiedEntropy modified_entropy(const SymMatrix& cov, int s, double tol) {
  if (s < 0) throw InvalidInput("modified_entropy: s must be nonnegative");
  const EigenDecomposition ed = eig_sym(cov);
  const double lmax = cov.dim() > 0 ? ed.eigenvalues.maxCoeff() : 0.0;
  const double thresh = tol * std::max(1.0, lmax);

  int nonzero = 0;
  for (int i = 0; i < cov.dim(); ++i) {
    const double lam = ed.eigenvalues[i];
    if (lam < -thresh) {
      throw NotPSD("modified_entropy: eigenvalue below PSD tolerance");
    }
    if (lam > thresh) ++nonzero;
  }

  const int r = std::min(s, nonzero);
  double logvol = 0.0;
  for (int i = 0; i < r; ++i) logvol += std::log(ed.eigenvalues[i]);

  const double value =
      0.5 * r * std::log(2.0 * std::numbers::pi * std::numbers::e) + logvol;
  return ModifiedEntropy{value, r, nonzero < s};
}

}  // namespace igsense
