#pragma once

#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "igsense/gaussian.hpp"
#include "igsense/numlin.hpp"
#include "igsense/rng.hpp"

namespace igsense {

/// Power schedule of the sequential algorithm:
///   Nominal: beta = (chi2_n(p)/eps^2 - 1/lambda) sigma2
///   Robust:  beta = max{0, sigma2 (1/(eps^2/chi2_n(p) - delta_s) - 1/lambda)}
/// The robust schedule drives each measured eigenvalue below the stopping
/// threshold by a margin delta_s to absorb covariance mismatch.
struct NominalPower {};
struct RobustPower {
  double delta_s = 0.0;
};
using PowerPolicy = std::variant<NominalPower, RobustPower>;

/// How much per-step state a run records.
///   Scalars:     cheap per-step scalars only.
///   Diagnostics: plus per-step mismatch norm delta_k and modified entropies.
///   Full:        plus per-step covariance matrices and posterior means.
enum class TraceDetail { Scalars, Diagnostics, Full };

struct SensingConfig {
  double sigma2 = 1.0;
  double epsilon = 0.1;
  double p = 0.9;
  int max_steps = 0;  // 0 means the signal dimension
  PowerPolicy power_policy = NominalPower{};
  double rank_tol = 1e-8;
  TraceDetail detail = TraceDetail::Diagnostics;

  void validate() const;
};

struct MeasurementRecord {
  int k = 0;
  Eigen::VectorXd direction;  // unit vector u_k
  double beta = 0.0;          // power, ||a_k||^2
  double y = 0.0;
  double lambda_hat = 0.0;  // assumed top eigenvalue when the step was designed

  double assumed_trace = 0.0;  // tr of the assumed covariance after the update
  double true_trace = 0.0;     // tr of the true conditional covariance after
  double error_after = 0.0;    // ||theta_k - x||

  // Diagnostics detail and up.
  double delta = 0.0;
  double entropy_assumed = 0.0;
  double entropy_true = 0.0;

  // Full detail only.
  Eigen::MatrixXd assumed_cov;
  Eigen::MatrixXd true_cov;
  Eigen::VectorXd theta;

  Eigen::VectorXd a() const { return std::sqrt(beta) * direction; }
};

struct SensingTrace {
  std::string policy;
  int n = 0;
  int s = 0;
  double sigma2 = 0.0;
  double epsilon = 0.0;
  double p = 0.0;
  double stop_threshold = 0.0;  // eps^2 / chi2_n(p)

  double delta_initial = 0.0;
  double initial_assumed_trace = 0.0;
  double initial_true_trace = 0.0;
  double entropy_assumed_initial = 0.0;
  double entropy_true_initial = 0.0;

  std::vector<MeasurementRecord> steps;

  Eigen::VectorXd signal;
  Eigen::VectorXd x_hat;
  double error = 0.0;
  double total_power = 0.0;
  double delta_final = 0.0;
  double final_assumed_norm = 0.0;  // ||Gamma_K||
  double final_true_norm = 0.0;     // ||Sigma_K||
  bool flagged = false;           // stopped on a nonpositive nominal power
  bool stopped_normally = false;  // assumed spectral norm reached threshold
};

struct MeasurementDesign {
  Eigen::VectorXd direction;
  double beta = 0.0;
  double lambda = 0.0;
};

/// Top eigenpair of gamma plus the policy's power for it.
/// Throws NothingToMeasure when the top eigenvalue is nonpositive.
MeasurementDesign design_measurement(const SymMatrix& gamma,
                                     const SensingConfig& cfg);

/// Power for a direction with assumed eigenvalue lambda; negative results are
/// not clamped for the nominal policy (callers decide how to treat them).
double power_for_eigenvalue(double lambda, double stop_threshold, double sigma2,
                            const PowerPolicy& policy);

SensingTrace run_info_greedy(const GaussianModel& assumed,
                             const GaussianModel& truth,
                             const SensingConfig& cfg, Rng& rng);
SensingTrace run_info_greedy_with_signal(const GaussianModel& assumed,
                                         const GaussianModel& truth,
                                         const SensingConfig& cfg,
                                         const Eigen::VectorXd& x,
                                         Rng& noise_rng);

SensingTrace run_batch(const GaussianModel& assumed, const GaussianModel& truth,
                       const SensingConfig& cfg, int K, Rng& rng);
SensingTrace run_batch_with_signal(const GaussianModel& assumed,
                                   const GaussianModel& truth,
                                   const SensingConfig& cfg, int K,
                                   const Eigen::VectorXd& x, Rng& noise_rng);

SensingTrace run_random(const GaussianModel& truth, const SensingConfig& cfg,
                        int K, const std::vector<double>& powers, Rng& rng);
SensingTrace run_random_with_signal(const GaussianModel& truth,
                                    const SensingConfig& cfg, int K,
                                    const std::vector<double>& powers,
                                    const Eigen::VectorXd& x, Rng& noise_rng,
                                    Rng& direction_rng);

double total_power(const SensingTrace& trace);

}  // namespace igsense
