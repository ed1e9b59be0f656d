#pragma once

#include <vector>

#include <Eigen/Dense>

#include "igsense/sensing.hpp"

namespace igsense {

/// Per-step comparison of an observed quantity against a closed-form bound.
/// Bounds are reported, never enforced: when the hypothesis behind a bound
/// fails we record that instead of raising.
struct BoundStep {
  int k = 0;
  double observed = 0.0;
  double bound = 0.0;
  bool condition_satisfied = false;  // hypothesis held and the value is valid
  bool holds = false;                // observed <= / < bound
};

struct BoundReport {
  std::vector<BoundStep> steps;
  bool hypothesis_satisfied = false;
  bool all_hold = false;  // every step with condition_satisfied also holds
};

/// Entropy bound along a trace:
///   H_k <= (s/2){ ln[2 pi e tr(Sigma)] - sum_{j<=k} ln(1/f_j) },
///   f_j = 1 - ((1-zeta)/s) * beta_j lhat_j / (beta_j lhat_j + sigma2),
/// gated on ||Sigma - Sigma_hat|| <= (zeta / 4^{K+1}) eps^2 / chi2_n(p).
/// The trace must carry per-step entropies (Diagnostics detail or better).
BoundReport entropy_bound(const SensingTrace& trace, double zeta, int s);

/// Literal closed form for the posterior entropy when the true covariance is
/// used: (1/2) ln[(2 pi e)^s prod lambda_i] - (chi2_n(p)/(2 eps^2)) sum_{j<=k}
/// lambda_j.
double ideal_entropy_paper(const Eigen::VectorXd& lambdas, int k, double eps,
                           double p, int n);

/// Exact ideal posterior entropy from the rank-one eigenvalue update: every
/// measured eigenvalue above the stopping threshold maps to eps^2/chi2_n(p).
double ideal_entropy_exact(const Eigen::VectorXd& lambdas, int k, double eps,
                           double p, int n);

/// Excess-power bound increment: [20/51 s + 1/272 K] chi2_n(p) sigma2 / eps^2.
double power_gap_bound(int s, int K, double eps, double p, int n,
                       double sigma2);

/// Closed-form ideal total power: sum over the K eigenvalues above the
/// stopping threshold of (chi2_n(p)/eps^2 - 1/lambda_k) sigma2.
double ideal_total_power(const Eigen::VectorXd& lambdas, double eps, double p,
                         int n, double sigma2);

/// Minimum number of training samples so the sample covariance lands within
/// delta0 of the truth with high probability:
///   ceil(4 sqrt(n) tr(Sigma) (||Sigma||/delta0^2 + 4/delta0)).
long long sample_size_bound(double trace_sigma, double norm_sigma, int n,
                            double delta0);

/// Compares total power of a mismatched robust run against an ideal run plus
/// the excess-power bound, and checks the final true covariance landed below
/// the stopping threshold. The two traces must come from the same truth.
BoundReport verify_power_gap(const SensingTrace& ideal_trace,
                             const SensingTrace& mismatch_trace, double bound);

}  // namespace igsense
