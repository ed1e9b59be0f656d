#include <cmath>
#include <numbers>

#include <doctest.h>

#include "igsense/gaussian.hpp"
#include "oracles.hpp"

using namespace igsense;

namespace {

SymMatrix random_psd(int n, Rng& rng) {
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i) m.row(i) = rng.normal_vector(n);
  return SymMatrix(m * m.transpose() / n);
}

constexpr double kLn2PiE = 2.8378770664093453;  // ln(2 pi e)

}  // namespace

TEST_SUITE_BEGIN("gaussian");

TEST_CASE("construction rejects indefinite covariances") {
  Eigen::VectorXd d(2);
  d << 1.0, -1.0;
  CHECK_THROWS_AS(GaussianModel::zero_mean(SymMatrix::Diagonal(d)), NotPSD);
}

TEST_CASE("declared rank is checked against the numeric rank") {
  Eigen::VectorXd d(3);
  d << 2.0, 1.0, 0.0;
  CHECK_NOTHROW(GaussianModel::zero_mean(SymMatrix::Diagonal(d), 1e-8, 2));
  CHECK_THROWS_AS(GaussianModel::zero_mean(SymMatrix::Diagonal(d), 1e-8, 3),
                  InvalidInput);
}

TEST_CASE("sampling a zero covariance returns the mean") {
  Eigen::VectorXd mean(3);
  mean << 1.0, -2.0, 0.5;
  const GaussianModel model(mean, SymMatrix::Zero(3));
  Rng rng(1);
  CHECK((sample_signal(model, rng) - mean).norm() == 0.0);
}

TEST_CASE("null eigen-directions are never excited") {
  Eigen::VectorXd d(2);
  d << 4.0, 0.0;
  const GaussianModel model = GaussianModel::zero_mean(SymMatrix::Diagonal(d));
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    CHECK(sample_signal(model, rng)[1] == 0.0);
  }
}

TEST_CASE("sample covariance converges to the model covariance") {
  const GaussianModel model = GaussianModel::zero_mean(SymMatrix::Identity(2));
  Rng rng(3);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(2, 2);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = sample_signal(model, rng);
    acc += x * x.transpose();
  }
  acc /= n;
  CHECK(spectral_norm(SymMatrix(acc - Eigen::MatrixXd::Identity(2, 2))) < 0.05);
}

TEST_CASE("rank-one update of an identity belief") {
  GaussianBelief belief{Eigen::VectorXd::Zero(3), SymMatrix::Identity(3)};
  Eigen::VectorXd a = Eigen::VectorXd::Unit(3, 0);
  const GaussianBelief out = posterior_update(belief, a, 0.7, 1.0);
  CHECK(out.gamma.mat()(0, 0) == doctest::Approx(0.5));
  CHECK(out.gamma.mat()(1, 1) == doctest::Approx(1.0));
  CHECK(out.gamma.mat()(2, 2) == doctest::Approx(1.0));
  CHECK(out.gamma.mat()(0, 1) == doctest::Approx(0.0));
  CHECK(out.theta[0] == doctest::Approx(0.35));
}

TEST_CASE("a zero measurement vector leaves the belief unchanged") {
  Rng rng(4);
  GaussianBelief belief{rng.normal_vector(4), random_psd(4, rng)};
  const GaussianBelief out =
      posterior_update(belief, Eigen::VectorXd::Zero(4), 1.3, 0.5);
  CHECK((out.theta - belief.theta).norm() == 0.0);
  CHECK((out.gamma.mat() - belief.gamma.mat()).norm() == 0.0);
}

TEST_CASE("posterior_update rejects nonpositive noise variance") {
  GaussianBelief belief{Eigen::VectorXd::Zero(2), SymMatrix::Identity(2)};
  CHECK_THROWS_AS(
      posterior_update(belief, Eigen::VectorXd::Unit(2, 0), 0.0, 0.0),
      InvalidInput);
}

TEST_CASE("posterior_update matches joint-Gaussian conditioning") {
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 6;
    GaussianBelief belief{rng.normal_vector(n), random_psd(n, rng)};
    const Eigen::VectorXd a = rng.normal_vector(n);
    const double y = rng.normal();
    const double sigma2 = 0.3 + rng.uniform01();

    const GaussianBelief out = posterior_update(belief, a, y, sigma2);
    Eigen::MatrixXd a_rows(1, n);
    a_rows.row(0) = a.transpose();
    Eigen::VectorXd yv(1);
    yv << y;
    const oracle::Conditional ref = oracle::condition_joint(
        belief.theta, belief.gamma.mat(), a_rows, yv, sigma2);
    CHECK((out.gamma.mat() - ref.cov).norm() < 1e-10);
    CHECK((out.theta - ref.mean).norm() < 1e-10);
  }
}

TEST_CASE("posterior_update never increases the trace") {
  Rng rng(6);
  for (int rep = 0; rep < 100; ++rep) {
    GaussianBelief belief{Eigen::VectorXd::Zero(5), random_psd(5, rng)};
    const Eigen::VectorXd a = rng.normal_vector(5);
    const GaussianBelief out = posterior_update(belief, a, 0.1, 0.7);
    CHECK(out.gamma.trace() <= belief.gamma.trace() + 1e-12);
  }
}

TEST_CASE("rank is preserved by the update") {
  Rng rng(7);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 4 + static_cast<int>(rng.uniform01() * 12);
    const int r = 1 + static_cast<int>(rng.uniform01() * n);
    Eigen::MatrixXd f(n, r);
    for (int i = 0; i < n; ++i) f.row(i) = rng.normal_vector(r);
    const SymMatrix gamma(f * f.transpose());
    const Eigen::VectorXd a = rng.normal_vector(n);
    const SymMatrix updated = posterior_cov_update(gamma, a, 0.5);
    CHECK(numeric_rank(updated) == numeric_rank(gamma));
  }
}

TEST_CASE("trace recursion is exact along the top eigen-direction") {
  Rng rng(8);
  for (int rep = 0; rep < 50; ++rep) {
    const SymMatrix gamma = random_psd(6, rng);
    const EigenDecomposition ed = eig_sym(gamma);
    const double lambda = ed.eigenvalues[0];
    const double beta = 0.1 + 3.0 * rng.uniform01();
    const double sigma2 = 0.2 + rng.uniform01();
    const SymMatrix updated = posterior_cov_update(
        gamma, std::sqrt(beta) * ed.eigenvectors.col(0), sigma2);
    const double predicted =
        gamma.trace() - beta * lambda * lambda / (beta * lambda + sigma2);
    CHECK(updated.trace() ==
          doctest::Approx(predicted).epsilon(1e-10));
  }
}

TEST_CASE("the update vanishes as the noise grows") {
  Rng rng(9);
  const SymMatrix gamma = random_psd(5, rng);
  const Eigen::VectorXd a = rng.normal_vector(5);
  double prev = std::numeric_limits<double>::infinity();
  for (const double sigma2 : {0.1, 1.0, 10.0, 100.0, 1000.0}) {
    const SymMatrix updated = posterior_cov_update(gamma, a, sigma2);
    const double diff = (updated.mat() - gamma.mat()).norm();
    CHECK(diff < prev);
    prev = diff;
  }
  CHECK(prev < 1e-2);
}

TEST_CASE("modified entropy of an embedded identity") {
  Eigen::VectorXd d = Eigen::VectorXd::Zero(6);
  d.head(3).setOnes();
  const ModifiedEntropy h = modified_entropy(SymMatrix::Diagonal(d), 3);
  CHECK(h.value == doctest::Approx(1.5 * kLn2PiE));
  CHECK(h.effective_rank == 3);
  CHECK_FALSE(h.capped);
}

TEST_CASE("modified entropy of a rank-one covariance") {
  Eigen::VectorXd d = Eigen::VectorXd::Zero(4);
  d[0] = std::exp(2.0);
  const ModifiedEntropy h = modified_entropy(SymMatrix::Diagonal(d), 1);
  CHECK(h.value == doctest::Approx(0.5 * kLn2PiE + 2.0));
}

TEST_CASE("modified entropy matches an LU determinant oracle at full rank") {
  // At full rank the eigenvalue product is the determinant, so the log-volume
  // term can be cross-checked by an independent LU factorization.
  Rng rng(10);
  const SymMatrix cov = random_psd(4, rng);
  const ModifiedEntropy h = modified_entropy(cov, 4);
  const double expected = 2.0 * kLn2PiE + oracle::lu_logabsdet(cov.mat());
  CHECK(h.value == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("modified entropy flags a deficient spectrum") {
  Eigen::VectorXd d(3);
  d << 2.0, 0.0, 0.0;
  const ModifiedEntropy h = modified_entropy(SymMatrix::Diagonal(d), 2);
  CHECK(h.capped);
  CHECK(h.effective_rank == 1);
}

TEST_SUITE_END();
