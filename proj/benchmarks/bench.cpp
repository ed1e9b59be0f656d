#include <benchmark/benchmark.h>

#include "igsense/gaussian.hpp"
#include "igsense/numlin.hpp"
#include "igsense/rng.hpp"
#include "igsense/sketch.hpp"

using namespace igsense;

namespace {

SymMatrix random_psd(int n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i) m.row(i) = rng.normal_vector(n);
  return SymMatrix(m * m.transpose() / n);
}

void bm_eig_sym(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const SymMatrix s = random_psd(n, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(eig_sym(s));
  }
}
BENCHMARK(bm_eig_sym)->Arg(32)->Arg(128)->Arg(500);

void bm_posterior_update(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(2);
  GaussianBelief belief{Eigen::VectorXd::Zero(n), random_psd(n, 3)};
  const Eigen::VectorXd a = rng.normal_vector(n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(posterior_update(belief, a, 0.5, 1.0));
  }
}
BENCHMARK(bm_posterior_update)->Arg(32)->Arg(500);

void bm_chi2_quantile(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(chi2_quantile(n, 0.9));
  }
}
BENCHMARK(bm_chi2_quantile)->Arg(2)->Arg(500);

void bm_recover_covariance(benchmark::State& state) {
  const int n = 8, s = 2, m = 4 * n * s;
  Rng rng(4);
  Eigen::MatrixXd f(n, s);
  for (int i = 0; i < n; ++i) f.row(i) = rng.normal_vector(s);
  const SymMatrix sigma(f * f.transpose());
  SketchEnsemble e;
  e.n = n;
  e.M = m;
  e.b = Eigen::MatrixXd(m, n);
  for (int i = 0; i < m; ++i) e.b.row(i) = rng.normal_vector(n);
  e.gamma = apply_operator(e.b, sigma);
  for (auto _ : state) {
    benchmark::DoNotOptimize(recover_covariance_detailed(e, 0.0));
  }
}
BENCHMARK(bm_recover_covariance);

}  // namespace

BENCHMARK_MAIN();
