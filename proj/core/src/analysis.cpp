#include "igsense/analysis.hpp"

#include <cmath>
#include <numbers>

namespace igsense {

namespace {

double log_2pie() { return std::log(2.0 * std::numbers::pi * std::numbers::e); }

}  // namespace

BoundReport entropy_bound(const SensingTrace& trace, double zeta, int s) {
  if (!(zeta > 0.0 && zeta < 1.0)) {
    throw InvalidInput("entropy_bound: zeta must lie in (0,1)");
  }
  if (trace.steps.empty()) {
    throw InvalidInput("entropy_bound: trace has no steps");
  }
  if (s <= 0) throw InvalidInput("entropy_bound: s must be positive");

  const int K = static_cast<int>(trace.steps.size());
  const double hyp_limit =
      zeta * trace.stop_threshold / std::pow(4.0, K + 1);

  BoundReport report;
  report.hypothesis_satisfied = trace.delta_initial <= hyp_limit;
  report.all_hold = true;

  double log_f_sum = 0.0;
  const double base = 0.5 * s * (log_2pie() + std::log(trace.initial_true_trace));
  for (int k = 1; k <= K; ++k) {
    const MeasurementRecord& rec = trace.steps[k - 1];
    const double snr = rec.beta * rec.lambda_hat /
                       (rec.beta * rec.lambda_hat + trace.sigma2);
    const double f = 1.0 - (1.0 - zeta) / s * snr;
    log_f_sum += std::log(f);

    BoundStep step;
    step.k = k;
    step.observed = rec.entropy_true;
    step.bound = base + 0.5 * s * log_f_sum;
    step.condition_satisfied =
        report.hypothesis_satisfied && std::isfinite(rec.entropy_true);
    step.holds = step.observed <= step.bound;
    if (step.condition_satisfied && !step.holds) report.all_hold = false;
    report.steps.push_back(step);
  }
  return report;
}

double ideal_entropy_paper(const Eigen::VectorXd& lambdas, int k, double eps,
                           double p, int n) {
  const int s = static_cast<int>(lambdas.size());
  if (k < 0 || k > s) throw InvalidInput("ideal_entropy_paper: bad k");
  const double chi2 = chi2_quantile(n, p);
  double logprod = 0.0;
  for (int i = 0; i < s; ++i) logprod += std::log(lambdas[i]);
  double lam_sum = 0.0;
  for (int j = 0; j < k; ++j) lam_sum += lambdas[j];
  return 0.5 * (s * log_2pie() + logprod) -
         0.5 * chi2 / (eps * eps) * lam_sum;
}

double ideal_entropy_exact(const Eigen::VectorXd& lambdas, int k, double eps,
                           double p, int n) {
  const int s = static_cast<int>(lambdas.size());
  if (k < 0 || k > s) throw InvalidInput("ideal_entropy_exact: bad k");
  const double thresh = eps * eps / chi2_quantile(n, p);
  double logprod = 0.0;
  for (int i = 0; i < s; ++i) {
    // Measuring an eigen-direction with the nominal power pins the eigenvalue
    // at the stopping threshold; eigenvalues at or below it are not measured.
    const double lam = (i < k && lambdas[i] > thresh) ? thresh : lambdas[i];
    logprod += std::log(lam);
  }
  return 0.5 * s * log_2pie() + logprod;
}

double power_gap_bound(int s, int K, double eps, double p, int n,
                       double sigma2) {
  if (K > s) throw InvalidInput("power_gap_bound: K must not exceed s");
  if (s < 0 || K < 0) throw InvalidInput("power_gap_bound: negative rank");
  const double chi2 = chi2_quantile(n, p);
  return (20.0 / 51.0 * s + 1.0 / 272.0 * K) * chi2 / (eps * eps) * sigma2;
}

double ideal_total_power(const Eigen::VectorXd& lambdas, double eps, double p,
                         int n, double sigma2) {
  const double chi2 = chi2_quantile(n, p);
  const double thresh = eps * eps / chi2;
  double power = 0.0;
  for (int i = 0; i < lambdas.size(); ++i) {
    if (lambdas[i] > thresh) {
      power += (chi2 / (eps * eps) - 1.0 / lambdas[i]) * sigma2;
    }
  }
  return power;
}

long long sample_size_bound(double trace_sigma, double norm_sigma, int n,
                            double delta0) {
  if (delta0 <= 0.0) throw InvalidInput("sample_size_bound: delta0 must be > 0");
  if (trace_sigma <= 0.0 || norm_sigma <= 0.0 || n <= 0) {
    throw InvalidInput("sample_size_bound: arguments must be positive");
  }
  const double rhs = 4.0 * std::sqrt(static_cast<double>(n)) * trace_sigma *
                     (norm_sigma / (delta0 * delta0) + 4.0 / delta0);
  return static_cast<long long>(std::ceil(rhs));
}

BoundReport verify_power_gap(const SensingTrace& ideal_trace,
                             const SensingTrace& mismatch_trace, double bound) {
  const int s = mismatch_trace.s;
  const double hyp_limit =
      mismatch_trace.stop_threshold / std::pow(4.0, s + 1);

  BoundReport report;
  report.hypothesis_satisfied = mismatch_trace.delta_initial <= hyp_limit;

  BoundStep gap;
  gap.k = static_cast<int>(mismatch_trace.steps.size());
  gap.observed = total_power(mismatch_trace) - total_power(ideal_trace);
  gap.bound = bound;
  gap.condition_satisfied = report.hypothesis_satisfied;
  gap.holds = gap.observed < gap.bound;
  report.steps.push_back(gap);

  // Final true covariance must have landed below the stopping threshold.
  BoundStep final_norm;
  final_norm.k = gap.k;
  final_norm.observed = mismatch_trace.final_true_norm;
  final_norm.bound = mismatch_trace.stop_threshold;
  final_norm.condition_satisfied = report.hypothesis_satisfied;
  final_norm.holds = final_norm.observed <= final_norm.bound + 1e-12;
  report.steps.push_back(final_norm);

  report.all_hold = (!gap.condition_satisfied || gap.holds) &&
                    (!final_norm.condition_satisfied || final_norm.holds);
  return report;
}

}  // namespace igsense
