#include "igsense/sketch.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <vector>

#include <nlohmann/json.hpp>

namespace igsense {

SketchEnsemble generate_sketches(const GaussianModel& truth, long long M,
                                 long long N, long long L, double sigma2,
                                 Rng& rng) {
  if (M <= 0 || N <= 0 || L <= 0) {
    throw InvalidInput("generate_sketches: M, N, L must be positive");
  }
  if (sigma2 < 0.0) {
    throw InvalidInput("generate_sketches: sigma2 must be nonnegative");
  }
  const int n = truth.dim();

  SketchEnsemble out;
  out.M = M;
  out.N = N;
  out.L = L;
  out.n = n;
  out.sigma2 = sigma2;

  Rng b_rng = rng.child("sketch-vectors");
  Rng x_rng = rng.child("sketch-signals");
  Rng w_rng = rng.child("sketch-noise");

  out.b.resize(M, n);
  for (long long i = 0; i < M; ++i) {
    out.b.row(i) = b_rng.normal_vector(n).transpose();
  }

  // The N signal copies are shared across all sketching vectors.
  Eigen::MatrixXd signals(n, N);
  for (long long j = 0; j < N; ++j) {
    signals.col(j) = sample_signal(truth, x_rng);
  }

  const double w_std = std::sqrt(sigma2 / static_cast<double>(L));
  out.gamma.resize(M);
  for (long long i = 0; i < M; ++i) {
    const Eigen::VectorXd proj = signals.transpose() * out.b.row(i).transpose();
    double acc = 0.0;
    for (long long j = 0; j < N; ++j) {
      const double y = proj[j] + w_std * w_rng.normal();
      acc += y * y;
    }
    out.gamma[i] = acc / static_cast<double>(N);
  }
  return out;
}

Eigen::VectorXd apply_operator(const Eigen::MatrixXd& b, const SymMatrix& x) {
  if (b.cols() != x.dim()) {
    throw InvalidInput("apply_operator: dimension mismatch");
  }
  const long long m = b.rows();
  Eigen::VectorXd out(m);
  for (long long i = 0; i < m; ++i) {
    out[i] = b.row(i) * x.mat() * b.row(i).transpose();
  }
  return out;
}

namespace {

Eigen::VectorXd apply_b(const Eigen::MatrixXd& b, const Eigen::MatrixXd& x) {
  const long long m = b.rows();
  Eigen::VectorXd out(m);
  for (long long i = 0; i < m; ++i) {
    out[i] = b.row(i) * x * b.row(i).transpose();
  }
  return out;
}

Eigen::MatrixXd apply_b_adjoint(const Eigen::MatrixXd& b,
                                const Eigen::VectorXd& v) {
  const int n = static_cast<int>(b.cols());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (long long i = 0; i < b.rows(); ++i) {
    out.noalias() += v[i] * (b.row(i).transpose() * b.row(i));
  }
  return out;
}

// Exact projection of v onto {w : ||w||_1 <= radius} (sort-based).
Eigen::VectorXd project_l1_ball(const Eigen::VectorXd& v, double radius) {
  if (radius <= 0.0) return Eigen::VectorXd::Zero(v.size());
  const double l1 = v.cwiseAbs().sum();
  if (l1 <= radius) return v;

  std::vector<double> mags(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) mags[i] = std::abs(v[i]);
  std::sort(mags.begin(), mags.end(), std::greater<double>());

  double cumsum = 0.0;
  double theta = 0.0;
  for (std::size_t k = 0; k < mags.size(); ++k) {
    cumsum += mags[k];
    const double t = (cumsum - radius) / static_cast<double>(k + 1);
    if (k + 1 == mags.size() || mags[k + 1] <= t) {
      theta = t;
      break;
    }
  }

  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double mag = std::max(std::abs(v[i]) - theta, 0.0);
    out[i] = v[i] < 0.0 ? -mag : mag;
  }
  return out;
}

Eigen::MatrixXd project_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  Eigen::VectorXd vals = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
}

// Largest eigenvalue of the M x M Gram matrix G_ij = (b_i' b_j)^2, which is
// the squared operator norm of B from (Sym, Frobenius) to l2.
double operator_norm_sq(const Eigen::MatrixXd& b) {
  const Eigen::MatrixXd inner = b * b.transpose();
  const Eigen::MatrixXd gram = inner.cwiseProduct(inner);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  return std::max(es.eigenvalues().maxCoeff(), 1e-30);
}

}  // namespace

RecoveryResult recover_covariance_detailed(const SketchEnsemble& ensemble,
                                           double tau,
                                           const SolverOptions& opts) {
  if (tau < 0.0) throw InvalidInput("recover_covariance: tau must be >= 0");
  const int n = ensemble.n;
  const double gamma_l1 = ensemble.gamma.cwiseAbs().sum();

  RecoveryResult result;
  // The zero matrix is feasible and trace-minimal when the ball contains 0.
  if (gamma_l1 <= tau) {
    result.x = SymMatrix::Zero(n);
    result.converged = true;
    return result;
  }

  // Scale the sketch space so the operator has unit norm; a uniform scaling
  // maps the l1 ball to an l1 ball, so the program is unchanged.
  const double scale = std::sqrt(operator_norm_sq(ensemble.b));
  const Eigen::MatrixXd b = ensemble.b / std::sqrt(scale);
  const Eigen::VectorXd gamma = ensemble.gamma / scale;
  const double radius = tau / scale;

  double rho = opts.rho;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);  // PSD copy
  Eigen::MatrixXd du = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd z = project_l1_ball(-gamma, radius) + gamma;
  Eigen::VectorXd dv = Eigen::VectorXd::Zero(ensemble.M);

  const double feas_scale = std::max(1.0, gamma_l1);
  double best_viol = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd best = p;
  double prev_trace = 0.0;

  auto l1_violation = [&](const Eigen::MatrixXd& m) {
    return std::max(0.0, (ensemble.gamma - apply_b(ensemble.b, m))
                                 .cwiseAbs()
                                 .sum() -
                             tau);
  };

  int iter = 0;
  for (; iter < opts.max_iters; ++iter) {
    // X-step: (I + B'B) X = -I/rho + (P - U) + B'(z - v), solved by CG.
    const Eigen::MatrixXd rhs = -Eigen::MatrixXd::Identity(n, n) / rho +
                                (p - du) + apply_b_adjoint(b, z - dv);
    {
      Eigen::MatrixXd r = rhs - (x + apply_b_adjoint(b, apply_b(b, x)));
      Eigen::MatrixXd d = r;
      double rs = r.squaredNorm();
      const double rhs_norm = std::max(rhs.squaredNorm(), 1e-30);
      for (int it = 0; it < opts.cg_max_iters && rs > opts.cg_tol * rhs_norm;
           ++it) {
        const Eigen::MatrixXd ad = d + apply_b_adjoint(b, apply_b(b, d));
        const double alpha = rs / d.cwiseProduct(ad).sum();
        x += alpha * d;
        r -= alpha * ad;
        const double rs_new = r.squaredNorm();
        d = r + (rs_new / rs) * d;
        rs = rs_new;
      }
    }

    const Eigen::MatrixXd p_old = p;
    const Eigen::VectorXd z_old = z;
    p = project_psd(x + du);
    const Eigen::VectorXd bx = apply_b(b, x);
    z = project_l1_ball(bx + dv - gamma, radius) + gamma;
    du += x - p;
    dv += bx - z;

    const double r_primal =
        std::sqrt((x - p).squaredNorm() + (bx - z).squaredNorm());
    const double r_dual =
        rho * std::sqrt((p - p_old).squaredNorm() + (z - z_old).squaredNorm());

    const double viol = l1_violation(p);
    if (viol < best_viol) {
      best_viol = viol;
      best = p;
    }

    const double tr = p.trace();
    const bool feasible = viol <= opts.feas_tol * feas_scale;
    const bool split_ok =
        r_primal <= opts.feas_tol * std::max(1.0, x.norm());
    const bool settled =
        std::abs(tr - prev_trace) <= opts.obj_tol * std::max(1.0, std::abs(tr));
    prev_trace = tr;
    if (feasible && split_ok && settled) {
      result.x = SymMatrix(p);
      result.converged = true;
      result.iterations = iter + 1;
      result.l1_residual = viol;
      result.split_residual = r_primal;
      return result;
    }

    if (opts.adaptive_rho && (iter + 1) % 50 == 0) {
      if (r_primal > 10.0 * r_dual) {
        rho *= 2.0;
        du /= 2.0;
        dv /= 2.0;
      } else if (r_dual > 10.0 * r_primal) {
        rho /= 2.0;
        du *= 2.0;
        dv *= 2.0;
      }
    }
  }

  result.x = SymMatrix(best);
  result.converged = false;
  result.iterations = iter;
  result.l1_residual = best_viol;
  result.split_residual = (x - best).norm();
  return result;
}

SymMatrix recover_covariance(const SketchEnsemble& ensemble, double tau,
                             const SolverOptions& opts) {
  RecoveryResult result = recover_covariance_detailed(ensemble, tau, opts);
  if (!result.converged) {
    throw NotConverged("recover_covariance: iteration cap reached",
                       result.x.mat(), result.l1_residual,
                       result.split_residual, result.iterations);
  }
  return result.x;
}

namespace {

long long ceil_to_ll(double v) {
  const double c = std::ceil(v);
  if (c >= static_cast<double>(std::numeric_limits<long long>::max())) {
    return std::numeric_limits<long long>::max();
  }
  return static_cast<long long>(c);
}

}  // namespace

SketchParams sketch_params(int n, int s, double trace_sigma, double norm_sigma,
                           double delta0, double sigma2,
                           const SketchConstants& consts) {
  if (n <= 0 || s <= 0 || trace_sigma <= 0.0 || norm_sigma <= 0.0 ||
      delta0 <= 0.0 || sigma2 < 0.0) {
    throw InvalidInput("sketch_params: arguments must be positive");
  }
  SketchParams out;
  out.consts = consts;

  const double nd = n;
  const double sd = s;
  const double cns = consts.c * nd * sd;
  out.M = ceil_to_ll(cns);
  out.tau = cns * delta0 / consts.C2;

  const double tau = out.tau;
  out.N = ceil_to_ll(4.0 * std::sqrt(nd) * trace_sigma *
                     (36.0 * consts.c * consts.c * std::pow(nd, 4) * sd * sd *
                          norm_sigma / (tau * tau) +
                      24.0 * consts.c * nd * nd * sd / tau));
  const double l1 = consts.c * sd * sigma2 / (4.0 * nd * norm_sigma);
  const double l2 =
      sigma2 / std::sqrt(2.0 * trace_sigma * norm_sigma * consts.c * sd *
                         std::pow(nd, 3));
  const double l3 = 6.0 * consts.c * nd * sd * sigma2 / tau;
  out.L = std::max<long long>(1, ceil_to_ll(std::max({l1, l2, l3})));
  return out;
}

void save_ensemble(const SketchEnsemble& ensemble, const std::string& prefix) {
  {
    std::ofstream bin(prefix + ".bin", std::ios::binary);
    if (!bin) throw IOError("save_ensemble: cannot open " + prefix + ".bin");
    for (long long i = 0; i < ensemble.M; ++i) {
      for (int j = 0; j < ensemble.n; ++j) {
        const double v = ensemble.b(i, j);
        bin.write(reinterpret_cast<const char*>(&v), sizeof(double));
      }
    }
    bin.write(reinterpret_cast<const char*>(ensemble.gamma.data()),
              static_cast<std::streamsize>(sizeof(double) * ensemble.M));
    if (!bin) throw IOError("save_ensemble: write failed for " + prefix);
  }
  nlohmann::json meta{{"schema_version", 1}, {"M", ensemble.M},
                      {"N", ensemble.N},     {"L", ensemble.L},
                      {"n", ensemble.n},     {"sigma2", ensemble.sigma2}};
  std::ofstream js(prefix + ".json");
  if (!js) throw IOError("save_ensemble: cannot open " + prefix + ".json");
  js << meta.dump(2) << "\n";
}

SketchEnsemble load_ensemble(const std::string& prefix) {
  nlohmann::json meta;
  {
    std::ifstream js(prefix + ".json");
    if (!js) throw IOError("load_ensemble: cannot open " + prefix + ".json");
    js >> meta;
  }
  SketchEnsemble out;
  out.M = meta.at("M").get<long long>();
  out.N = meta.at("N").get<long long>();
  out.L = meta.at("L").get<long long>();
  out.n = meta.at("n").get<int>();
  out.sigma2 = meta.at("sigma2").get<double>();

  std::ifstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw IOError("load_ensemble: cannot open " + prefix + ".bin");
  out.b.resize(out.M, out.n);
  for (long long i = 0; i < out.M; ++i) {
    for (int j = 0; j < out.n; ++j) {
      double v;
      bin.read(reinterpret_cast<char*>(&v), sizeof(double));
      out.b(i, j) = v;
    }
  }
  out.gamma.resize(out.M);
  bin.read(reinterpret_cast<char*>(out.gamma.data()),
           static_cast<std::streamsize>(sizeof(double) * out.M));
  if (!bin) throw IOError("load_ensemble: truncated binary for " + prefix);
  return out;
}

}  // namespace igsense
