#pragma once

#include <optional>

#include <Eigen/Dense>

#include "igsense/numlin.hpp"
#include "igsense/rng.hpp"

namespace igsense {

/// Zero-mean (by default) Gaussian signal model with a possibly rank
/// deficient covariance. PSD is checked at construction; eigenvalues within
/// -rank_tol * max(1, lambda_max) of zero are treated as zero when sampling.
class GaussianModel {
 public:
  GaussianModel(Eigen::VectorXd mean, SymMatrix covariance,
                double rank_tol = 1e-8,
                std::optional<int> declared_rank = std::nullopt);

  static GaussianModel zero_mean(SymMatrix covariance, double rank_tol = 1e-8,
                                 std::optional<int> declared_rank = std::nullopt);

  int dim() const { return static_cast<int>(mean_.size()); }
  int rank() const { return rank_; }
  double rank_tol() const { return rank_tol_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const SymMatrix& covariance() const { return cov_; }
  const EigenDecomposition& eigen() const { return eig_; }

 private:
  Eigen::VectorXd mean_;
  SymMatrix cov_;
  double rank_tol_;
  EigenDecomposition eig_;
  int rank_ = 0;
};

/// Posterior state of the sensing algorithm: mean theta and covariance gamma.
/// Immutable snapshot; updates return a new value.
struct GaussianBelief {
  Eigen::VectorXd theta;
  SymMatrix gamma;
};

/// Draw mean + U sqrt(Lambda) z over the nonzero eigen-directions.
Eigen::VectorXd sample_signal(const GaussianModel& model, Rng& rng);

/// Rank-one Bayesian update for the scalar observation y = a'x + w,
/// w ~ N(0, sigma2). The conditioning denominator is a'Gamma a + sigma2.
/// The result covariance is re-symmetrized.
GaussianBelief posterior_update(const GaussianBelief& belief,
                                const Eigen::VectorXd& a, double y,
                                double sigma2);

/// Covariance-only form of the same update; used to track the true
/// conditional covariance alongside the assumed one.
SymMatrix posterior_cov_update(const SymMatrix& gamma, const Eigen::VectorXd& a,
                               double sigma2);

/// Log-volume entropy for a rank-s Gaussian:
///   (r/2) ln(2 pi e) + sum of ln(lambda) over the r retained eigenvalues,
/// where r = min(s, count of eigenvalues above tolerance). `capped` flags
/// the case where fewer than s eigenvalues cleared the tolerance.
struct ModifiedEntropy {
  double value;
  int effective_rank;
  bool capped;
};

ModifiedEntropy modified_entropy(const SymMatrix& cov, int s,
                                 double tol = 1e-8);

}  // namespace igsense
