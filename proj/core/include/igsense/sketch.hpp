#pragma once

#include <string>

#include <Eigen/Dense>

#include "igsense/gaussian.hpp"
#include "igsense/numlin.hpp"
#include "igsense/rng.hpp"

namespace igsense {

/// Quadratic covariance sketches: rows of `b` are the sketching vectors,
/// gamma_i = (1/N) sum_j (b_i' x_j + w_ij)^2 with w_ij ~ N(0, sigma2/L).
struct SketchEnsemble {
  Eigen::MatrixXd b;      // M x n, one sketching vector per row
  Eigen::VectorXd gamma;  // length M, elementwise >= 0
  long long M = 0;
  long long N = 0;
  long long L = 0;
  int n = 0;
  double sigma2 = 0.0;
};

struct SketchConstants {
  double c = 4.0;
  double c0 = 1.0;
  double c1 = 1.0;
  double C1 = 1.0;
  double C2 = 1.0;
};

struct SketchParams {
  long long M = 0;
  long long N = 0;
  long long L = 0;
  double tau = 0.0;
  SketchConstants consts;
};

SketchEnsemble generate_sketches(const GaussianModel& truth, long long M,
                                 long long N, long long L, double sigma2,
                                 Rng& rng);

/// [B(X)]_i = b_i' X b_i.
Eigen::VectorXd apply_operator(const Eigen::MatrixXd& b, const SymMatrix& x);

struct SolverOptions {
  double rho = 1.0;
  int max_iters = 5000;
  double feas_tol = 1e-6;
  double psd_tol = 1e-9;
  double obj_tol = 1e-6;
  bool adaptive_rho = true;
  int cg_max_iters = 200;
  double cg_tol = 1e-12;
};

struct RecoveryResult {
  SymMatrix x;
  bool converged = false;
  int iterations = 0;
  double l1_residual = 0.0;   // ||gamma - B(x)||_1 - tau, clamped at 0
  double split_residual = 0.0;
};

/// min tr(X) s.t. X >= 0, ||gamma - B(X)||_1 <= tau, by two-block operator
/// splitting: a CG solve for the coupled quadratic step, a PSD eigenvalue
/// projection, and a sort-based exact projection onto the l1 ball of radius
/// tau around gamma. The returned matrix is always the PSD iterate.
RecoveryResult recover_covariance_detailed(const SketchEnsemble& ensemble,
                                           double tau,
                                           const SolverOptions& opts = {});

/// Same, but throws NotConverged (carrying the best iterate and residuals)
/// when the iteration cap is hit before the tolerances are met.
SymMatrix recover_covariance(const SketchEnsemble& ensemble, double tau,
                             const SolverOptions& opts = {});

/// Parameter schedule for sketching: M = ceil(c n s), tau = c n s delta0 / C2,
/// and the N, L lower bounds evaluated literally (L floored at 1).
SketchParams sketch_params(int n, int s, double trace_sigma, double norm_sigma,
                           double delta0, double sigma2,
                           const SketchConstants& consts = {});

/// Flat binary (vectors row-major: b then gamma) plus a JSON metadata
/// sidecar, written as <prefix>.bin and <prefix>.json.
void save_ensemble(const SketchEnsemble& ensemble, const std::string& prefix);
SketchEnsemble load_ensemble(const std::string& prefix);

}  // namespace igsense
