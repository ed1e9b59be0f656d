#include <cmath>

#include <doctest.h>

#include "igsense/analysis.hpp"
#include "igsense/sensing.hpp"

using namespace igsense;

namespace {

GaussianModel model_with_spectrum(const Eigen::VectorXd& lambdas, int n,
                                  Rng& rng) {
  Eigen::MatrixXd g(n, n);
  for (int i = 0; i < n; ++i) g.row(i) = rng.normal_vector(n);
  const Eigen::MatrixXd q =
      Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  Eigen::VectorXd padded = Eigen::VectorXd::Zero(n);
  padded.head(lambdas.size()) = lambdas;
  return GaussianModel::zero_mean(
      SymMatrix(q * padded.asDiagonal() * q.transpose()));
}

SensingConfig basic_config(double stop_threshold_target, int n) {
  SensingConfig cfg;
  cfg.sigma2 = 1.0;
  cfg.p = 0.9;
  cfg.epsilon = std::sqrt(stop_threshold_target * chi2_quantile(n, cfg.p));
  cfg.detail = TraceDetail::Diagnostics;
  return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("sensing");

TEST_CASE("config validation rejects bad fields") {
  SensingConfig cfg;
  cfg.sigma2 = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
  cfg = SensingConfig{};
  cfg.p = 1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
  cfg = SensingConfig{};
  cfg.epsilon = -1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
}

TEST_CASE("nominal power vanishes at the stopping threshold") {
  const double thresh = 0.25;
  CHECK(power_for_eigenvalue(thresh, thresh, 1.0, NominalPower{}) ==
        doctest::Approx(0.0));
}

TEST_CASE("design_measurement picks the top eigen-direction") {
  Eigen::VectorXd d(2);
  d << 5.0, 1.0;
  SensingConfig cfg;
  const MeasurementDesign m = design_measurement(SymMatrix::Diagonal(d), cfg);
  CHECK(m.lambda == doctest::Approx(5.0));
  CHECK(std::abs(m.direction[0]) == doctest::Approx(1.0));
}

TEST_CASE("design_measurement power matches the quantile formula") {
  SensingConfig cfg;
  cfg.sigma2 = 1.0;
  cfg.epsilon = 0.5;
  cfg.p = 0.9;
  Eigen::VectorXd d(4);
  d << 2.0, 0.1, 0.1, 0.1;
  const MeasurementDesign m = design_measurement(SymMatrix::Diagonal(d), cfg);
  const double chi2 = chi2_quantile(4, 0.9);
  CHECK(m.beta == doctest::Approx(chi2 / 0.25 - 0.5).epsilon(1e-9));
}

TEST_CASE("design_measurement refuses a zero covariance") {
  SensingConfig cfg;
  CHECK_THROWS_AS(design_measurement(SymMatrix::Zero(3), cfg), NothingToMeasure);
}

TEST_CASE("robust power requires a positive residual threshold") {
  CHECK_THROWS_AS(power_for_eigenvalue(1.0, 0.25, 1.0, RobustPower{0.3}),
                  InvalidInput);
  const double beta = power_for_eigenvalue(1.0, 0.25, 1.0, RobustPower{0.05});
  CHECK(beta == doctest::Approx(1.0 / 0.2 - 1.0));
}

TEST_CASE("a zero-covariance truth takes zero steps") {
  const GaussianModel zero = GaussianModel::zero_mean(SymMatrix::Zero(4));
  SensingConfig cfg = basic_config(0.1, 4);
  Rng rng(1);
  const SensingTrace trace = run_info_greedy(zero, zero, cfg, rng);
  CHECK(trace.steps.empty());
  CHECK(trace.error == doctest::Approx(0.0));
  CHECK(trace.stopped_normally);
}

TEST_CASE("matched models terminate after the above-threshold eigenvalues") {
  Rng rng(2);
  Eigen::VectorXd lambdas(5);
  lambdas << 6.0, 4.0, 2.5, 1.5, 1.1;
  const GaussianModel truth = model_with_spectrum(lambdas, 12, rng);
  SensingConfig cfg = basic_config(0.5, 12);

  Rng run_rng(3);
  const SensingTrace trace = run_info_greedy(truth, truth, cfg, run_rng);
  CHECK(static_cast<int>(trace.steps.size()) == 5);
  CHECK(trace.stopped_normally);
  CHECK(trace.final_assumed_norm <= trace.stop_threshold + 1e-12);

  // No mismatch means the two covariance tracks coincide at every step.
  for (const auto& rec : trace.steps) {
    CHECK(rec.delta == doctest::Approx(0.0));
    CHECK(rec.assumed_trace == doctest::Approx(rec.true_trace));
  }
  CHECK(trace.delta_final == doctest::Approx(0.0));
}

TEST_CASE("matched total power equals the closed form") {
  Rng rng(4);
  Eigen::VectorXd lambdas(4);
  lambdas << 5.0, 3.0, 2.0, 1.2;
  const GaussianModel truth = model_with_spectrum(lambdas, 10, rng);
  SensingConfig cfg = basic_config(0.4, 10);

  Rng run_rng(5);
  const SensingTrace trace = run_info_greedy(truth, truth, cfg, run_rng);
  const double expected =
      ideal_total_power(lambdas, cfg.epsilon, cfg.p, 10, cfg.sigma2);
  CHECK(total_power(trace) == doctest::Approx(expected).epsilon(1e-9));
  CHECK(trace.total_power == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("measurement vectors carry the recorded power") {
  Rng rng(6);
  Eigen::VectorXd lambdas(3);
  lambdas << 4.0, 2.0, 1.5;
  const GaussianModel truth = model_with_spectrum(lambdas, 8, rng);
  SensingConfig cfg = basic_config(0.3, 8);
  Rng run_rng(7);
  const SensingTrace trace = run_info_greedy(truth, truth, cfg, run_rng);
  for (const auto& rec : trace.steps) {
    CHECK(rec.a().squaredNorm() == doctest::Approx(rec.beta).epsilon(1e-12));
    CHECK(rec.direction.norm() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("batch with zero steps returns the prior mean") {
  Rng rng(8);
  Eigen::VectorXd lambdas(2);
  lambdas << 3.0, 2.0;
  const GaussianModel truth = model_with_spectrum(lambdas, 6, rng);
  SensingConfig cfg = basic_config(0.5, 6);
  Rng run_rng(9);
  const SensingTrace trace = run_batch(truth, truth, cfg, 0, run_rng);
  CHECK(trace.steps.empty());
  CHECK(trace.x_hat.norm() == doctest::Approx(0.0));
  CHECK(trace.error == doctest::Approx(trace.signal.norm()));
}

TEST_CASE("matched batch uses the prior eigenvectors in order") {
  Rng rng(10);
  Eigen::VectorXd lambdas(3);
  lambdas << 5.0, 3.0, 2.0;
  const GaussianModel truth = model_with_spectrum(lambdas, 7, rng);
  SensingConfig cfg = basic_config(0.5, 7);
  Rng run_rng(11);
  const SensingTrace trace = run_batch(truth, truth, cfg, 3, run_rng);
  REQUIRE(trace.steps.size() == 3);
  const EigenDecomposition ed = eig_sym(truth.covariance());
  for (int k = 0; k < 3; ++k) {
    CHECK((trace.steps[k].direction - ed.eigenvectors.col(k)).norm() < 1e-12);
  }
}

TEST_CASE("random baseline with zero steps or zero power is the prior") {
  Rng rng(12);
  Eigen::VectorXd lambdas(2);
  lambdas << 3.0, 2.0;
  const GaussianModel truth = model_with_spectrum(lambdas, 5, rng);
  SensingConfig cfg = basic_config(0.5, 5);

  Rng r1(13);
  const SensingTrace empty = run_random(truth, cfg, 0, {}, r1);
  CHECK(empty.x_hat.norm() == doctest::Approx(0.0));

  Rng r2(14);
  const SensingTrace zero_power =
      run_random(truth, cfg, 3, {0.0, 0.0, 0.0}, r2);
  CHECK(zero_power.error == doctest::Approx(zero_power.signal.norm()));
}

TEST_CASE("random baseline validates the powers array") {
  Rng rng(15);
  Eigen::VectorXd lambdas(1);
  lambdas << 2.0;
  const GaussianModel truth = model_with_spectrum(lambdas, 4, rng);
  SensingConfig cfg = basic_config(0.5, 4);
  Rng run_rng(16);
  CHECK_THROWS_AS(run_random(truth, cfg, 2, {1.0}, run_rng), InvalidInput);
}

TEST_CASE("stored mismatch norms match recomputation") {
  Rng rng(17);
  Eigen::VectorXd lambdas(3);
  lambdas << 5.0, 3.0, 2.0;
  const GaussianModel truth = model_with_spectrum(lambdas, 8, rng);
  // Small PSD perturbation keeps the assumed model PSD.
  Eigen::VectorXd e = 0.05 * rng.normal_vector(8);
  const GaussianModel assumed = GaussianModel::zero_mean(
      SymMatrix(truth.covariance().mat() + e * e.transpose()));
  SensingConfig cfg = basic_config(0.5, 8);
  cfg.detail = TraceDetail::Full;

  Rng run_rng(18);
  const SensingTrace trace = run_info_greedy(assumed, truth, cfg, run_rng);
  REQUIRE(!trace.steps.empty());
  for (const auto& rec : trace.steps) {
    const double recomputed =
        spectral_norm(SymMatrix(rec.assumed_cov - rec.true_cov));
    CHECK(rec.delta == doctest::Approx(recomputed).epsilon(1e-12));
  }
}

TEST_CASE("mismatch contraction and trace decrease along mismatched runs") {
  Rng rng(19);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd lambdas(3);
    lambdas << 4.0, 2.5, 1.5;
    const GaussianModel truth = model_with_spectrum(lambdas, 8, rng);
    Eigen::VectorXd e = 0.02 * rng.normal_vector(8);
    const GaussianModel assumed = GaussianModel::zero_mean(
        SymMatrix(truth.covariance().mat() + e * e.transpose()));
    SensingConfig cfg = basic_config(0.5, 8);

    Rng run_rng(100 + rep);
    const SensingTrace trace = run_info_greedy(assumed, truth, cfg, run_rng);
    double prev_delta = trace.delta_initial;
    double prev_trace = trace.initial_true_trace;
    for (const auto& rec : trace.steps) {
      if (prev_delta <= 3.0 * cfg.sigma2 / (4.0 * rec.beta)) {
        CHECK(rec.delta <= 4.0 * prev_delta + 1e-12);
      }
      if (prev_delta <= rec.lambda_hat) {
        const double bl = rec.beta * rec.lambda_hat;
        const double bound = prev_trace - bl * rec.lambda_hat / (bl + cfg.sigma2) +
                             3.0 * bl * prev_delta /
                                 (bl + cfg.sigma2 - rec.beta * prev_delta);
        CHECK(rec.true_trace <= bound + 1e-10);
      }
      prev_delta = rec.delta;
      prev_trace = rec.true_trace;
    }
  }
}

TEST_CASE("total_power sums the recorded step powers") {
  SensingTrace trace;
  CHECK(total_power(trace) == doctest::Approx(0.0));
  MeasurementRecord r1, r2;
  r1.beta = 1.0;
  r2.beta = 2.0;
  trace.steps = {r1, r2};
  CHECK(total_power(trace) == doctest::Approx(3.0));
}

TEST_SUITE_END();
