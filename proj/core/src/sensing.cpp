#include "igsense/sensing.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <utility>

namespace igsense {

void SensingConfig::validate() const {
  if (sigma2 <= 0.0) throw InvalidInput("SensingConfig: sigma2 must be > 0");
  if (epsilon <= 0.0) throw InvalidInput("SensingConfig: epsilon must be > 0");
  if (!(p > 0.0 && p < 1.0)) {
    throw InvalidInput("SensingConfig: p must lie in (0,1)");
  }
  if (max_steps < 0) throw InvalidInput("SensingConfig: max_steps must be >= 0");
  if (rank_tol <= 0.0) throw InvalidInput("SensingConfig: rank_tol must be > 0");
  if (const auto* robust = std::get_if<RobustPower>(&power_policy)) {
    if (robust->delta_s < 0.0) {
      throw InvalidInput("SensingConfig: robust delta_s must be >= 0");
    }
  }
}

double power_for_eigenvalue(double lambda, double stop_threshold, double sigma2,
                            const PowerPolicy& policy) {
  if (lambda <= 0.0) return 0.0;
  if (const auto* robust = std::get_if<RobustPower>(&policy)) {
    const double target = stop_threshold - robust->delta_s;
    if (target <= 0.0) {
      throw InvalidInput(
          "RobustPower: delta_s must be smaller than the stopping threshold");
    }
    return std::max(0.0, sigma2 * (1.0 / target - 1.0 / lambda));
  }
  // Nominal, Algorithm line: beta = (chi2/eps^2 - 1/lambda) sigma2.
  return sigma2 * (1.0 / stop_threshold - 1.0 / lambda);
}

MeasurementDesign design_measurement(const SymMatrix& gamma,
                                     const SensingConfig& cfg) {
  cfg.validate();
  const int n = gamma.dim();
  const EigenDecomposition ed = eig_sym(gamma);
  const double lambda = ed.eigenvalues[0];
  if (lambda <= 0.0) {
    throw NothingToMeasure("design_measurement: top eigenvalue is nonpositive");
  }
  const double thresh =
      cfg.epsilon * cfg.epsilon / chi2_quantile(n, cfg.p);
  MeasurementDesign d;
  d.direction = ed.eigenvectors.col(0);
  d.lambda = lambda;
  d.beta = power_for_eigenvalue(lambda, thresh, cfg.sigma2, cfg.power_policy);
  return d;
}

namespace {

struct StepPlan {
  Eigen::VectorXd direction;
  double beta = 0.0;
  double lambda_hat = 0.0;
};

struct PlanResult {
  enum class Kind { Measure, StopNormal, StopFlagged } kind;
  StepPlan plan;
};

using Planner = std::function<PlanResult(int k, const SymMatrix& assumed_cov)>;

SensingTrace run_steps(std::string policy_name,
                       const GaussianModel& belief_model,
                       const GaussianModel& truth, const SensingConfig& cfg,
                       const Eigen::VectorXd& x, Rng& noise_rng,
                       const Planner& plan, int step_limit,
                       bool has_mismatch) {
  cfg.validate();
  const int n = truth.dim();
  if (belief_model.dim() != n || x.size() != n) {
    throw InvalidInput("run: dimension mismatch between models and signal");
  }

  SensingTrace trace;
  trace.policy = std::move(policy_name);
  trace.n = n;
  trace.s = truth.rank();
  trace.sigma2 = cfg.sigma2;
  trace.epsilon = cfg.epsilon;
  trace.p = cfg.p;
  trace.stop_threshold =
      cfg.epsilon * cfg.epsilon / chi2_quantile(n, cfg.p);
  trace.signal = x;

  GaussianBelief belief{belief_model.mean(), belief_model.covariance()};
  SymMatrix true_cov = truth.covariance();

  const bool diag = cfg.detail != TraceDetail::Scalars;
  const bool full = cfg.detail == TraceDetail::Full;

  trace.delta_initial =
      has_mismatch
          ? spectral_norm(SymMatrix(belief.gamma.mat() - true_cov.mat()))
          : 0.0;
  trace.initial_assumed_trace = belief.gamma.trace();
  trace.initial_true_trace = true_cov.trace();
  if (diag) {
    trace.entropy_assumed_initial =
        modified_entropy(belief.gamma, trace.s, cfg.rank_tol).value;
    trace.entropy_true_initial =
        modified_entropy(true_cov, trace.s, cfg.rank_tol).value;
  }

  const double sigma = std::sqrt(cfg.sigma2);
  for (int k = 1; k <= step_limit; ++k) {
    const PlanResult pr = plan(k, belief.gamma);
    if (pr.kind == PlanResult::Kind::StopNormal) {
      trace.stopped_normally = true;
      break;
    }
    if (pr.kind == PlanResult::Kind::StopFlagged) {
      trace.flagged = true;
      break;
    }

    const Eigen::VectorXd a = std::sqrt(pr.plan.beta) * pr.plan.direction;
    const double y = a.dot(x) + sigma * noise_rng.normal();

    belief = posterior_update(belief, a, y, cfg.sigma2);
    true_cov = posterior_cov_update(true_cov, a, cfg.sigma2);

    MeasurementRecord rec;
    rec.k = k;
    rec.direction = pr.plan.direction;
    rec.beta = pr.plan.beta;
    rec.y = y;
    rec.lambda_hat = pr.plan.lambda_hat;
    rec.assumed_trace = belief.gamma.trace();
    rec.true_trace = true_cov.trace();
    rec.error_after = (belief.theta - x).norm();
    if (diag) {
      rec.delta = has_mismatch ? spectral_norm(SymMatrix(
                                     belief.gamma.mat() - true_cov.mat()))
                               : 0.0;
      rec.entropy_assumed =
          modified_entropy(belief.gamma, trace.s, cfg.rank_tol).value;
      rec.entropy_true =
          modified_entropy(true_cov, trace.s, cfg.rank_tol).value;
    }
    if (full) {
      rec.assumed_cov = belief.gamma.mat();
      rec.true_cov = true_cov.mat();
      rec.theta = belief.theta;
    }
    trace.steps.push_back(std::move(rec));
    trace.total_power += pr.plan.beta;
  }

  trace.final_assumed_norm = spectral_norm(belief.gamma);
  trace.final_true_norm =
      has_mismatch ? spectral_norm(true_cov) : trace.final_assumed_norm;
  if (!trace.stopped_normally && !trace.flagged) {
    // Ran out of steps; note whether the stopping criterion happens to hold.
    trace.stopped_normally =
        trace.final_assumed_norm <= trace.stop_threshold + 1e-12;
  }

  trace.x_hat = belief.theta;
  trace.error = (belief.theta - x).norm();
  trace.delta_final =
      has_mismatch
          ? spectral_norm(SymMatrix(belief.gamma.mat() - true_cov.mat()))
          : 0.0;
  return trace;
}

}  // namespace

SensingTrace run_info_greedy_with_signal(const GaussianModel& assumed,
                                         const GaussianModel& truth,
                                         const SensingConfig& cfg,
                                         const Eigen::VectorXd& x,
                                         Rng& noise_rng) {
  const int n = truth.dim();
  const double thresh =
      cfg.epsilon * cfg.epsilon / chi2_quantile(n, cfg.p);
  const int limit = cfg.max_steps > 0 ? cfg.max_steps : n;
  const bool mismatch = &assumed != &truth;

  // Nominal powers drive the measured eigenvalue to the threshold exactly;
  // a relative slack keeps roundoff from triggering spurious extra steps.
  const double stop_slack = thresh + 1e-12 * std::max(1.0, thresh);
  Planner plan = [&cfg, thresh, stop_slack](int,
                                            const SymMatrix& gamma) -> PlanResult {
    const EigenDecomposition ed = eig_sym(gamma);
    const double lambda = ed.eigenvalues[0];
    if (lambda <= stop_slack) {
      return {PlanResult::Kind::StopNormal, {}};
    }
    const double beta =
        power_for_eigenvalue(lambda, thresh, cfg.sigma2, cfg.power_policy);
    if (beta <= 0.0) {
      return {PlanResult::Kind::StopFlagged, {}};
    }
    return {PlanResult::Kind::Measure,
            {ed.eigenvectors.col(0), beta, lambda}};
  };
  return run_steps("info_greedy", assumed, truth, cfg, x, noise_rng, plan,
                   limit, mismatch);
}

SensingTrace run_info_greedy(const GaussianModel& assumed,
                             const GaussianModel& truth,
                             const SensingConfig& cfg, Rng& rng) {
  Rng signal_rng = rng.child("signal");
  Rng noise_rng = rng.child("noise");
  const Eigen::VectorXd x = sample_signal(truth, signal_rng);
  return run_info_greedy_with_signal(assumed, truth, cfg, x, noise_rng);
}

SensingTrace run_batch_with_signal(const GaussianModel& assumed,
                                   const GaussianModel& truth,
                                   const SensingConfig& cfg, int K,
                                   const Eigen::VectorXd& x, Rng& noise_rng) {
  if (K < 0) throw InvalidInput("run_batch: K must be >= 0");
  const int n = truth.dim();
  const double thresh =
      cfg.epsilon * cfg.epsilon / chi2_quantile(n, cfg.p);
  const EigenDecomposition ed = eig_sym(assumed.covariance());
  const bool mismatch = &assumed != &truth;

  // Directions and powers are fixed up front from the initial assumed
  // covariance; nonpositive powers are clamped to zero.
  Planner plan = [&cfg, &ed, thresh, n](int k, const SymMatrix&) -> PlanResult {
    const int i = k - 1;
    if (i >= n) return {PlanResult::Kind::StopNormal, {}};
    const double lambda = ed.eigenvalues[i];
    const double beta =
        lambda > 0.0
            ? std::max(0.0, power_for_eigenvalue(lambda, thresh, cfg.sigma2,
                                                 cfg.power_policy))
            : 0.0;
    return {PlanResult::Kind::Measure, {ed.eigenvectors.col(i), beta, lambda}};
  };
  return run_steps("batch", assumed, truth, cfg, x, noise_rng, plan,
                   std::min(K, n), mismatch);
}

SensingTrace run_batch(const GaussianModel& assumed, const GaussianModel& truth,
                       const SensingConfig& cfg, int K, Rng& rng) {
  Rng signal_rng = rng.child("signal");
  Rng noise_rng = rng.child("noise");
  const Eigen::VectorXd x = sample_signal(truth, signal_rng);
  return run_batch_with_signal(assumed, truth, cfg, K, x, noise_rng);
}

SensingTrace run_random_with_signal(const GaussianModel& truth,
                                    const SensingConfig& cfg, int K,
                                    const std::vector<double>& powers,
                                    const Eigen::VectorXd& x, Rng& noise_rng,
                                    Rng& direction_rng) {
  if (K < 0) throw InvalidInput("run_random: K must be >= 0");
  if (static_cast<int>(powers.size()) != K) {
    throw InvalidInput("run_random: powers must have length K");
  }
  const int n = truth.dim();

  Planner plan = [&powers, &direction_rng, n](int k,
                                              const SymMatrix&) -> PlanResult {
    Eigen::VectorXd g = direction_rng.normal_vector(n);
    const double norm = g.norm();
    if (norm == 0.0) g[0] = 1.0; else g /= norm;
    return {PlanResult::Kind::Measure, {g, std::max(0.0, powers[k - 1]), 0.0}};
  };
  // Reconstruction uses the true model's posterior; only directions are
  // uninformed.
  return run_steps("random", truth, truth, cfg, x, noise_rng, plan, K, false);
}

SensingTrace run_random(const GaussianModel& truth, const SensingConfig& cfg,
                        int K, const std::vector<double>& powers, Rng& rng) {
  Rng signal_rng = rng.child("signal");
  Rng noise_rng = rng.child("noise");
  Rng direction_rng = rng.child("directions");
  const Eigen::VectorXd x = sample_signal(truth, signal_rng);
  return run_random_with_signal(truth, cfg, K, powers, x, noise_rng,
                                direction_rng);
}

double total_power(const SensingTrace& trace) {
  double sum = 0.0;
  for (const auto& rec : trace.steps) sum += rec.beta;
  return sum;
}

}  // namespace igsense
