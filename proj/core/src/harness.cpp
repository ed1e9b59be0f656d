#include "igsense/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

namespace igsense {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join_path(const std::string& path, const char* key) {
  return path.empty() ? key : path + "." + key;
}

template <typename T>
T get_field(const json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) {
    throw ConfigError(join_path(path, key), "missing required field");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(join_path(path, key), e.what());
  }
}

template <typename T>
T get_field_or(const json& j, const std::string& path, const char* key,
               T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(join_path(path, key), e.what());
  }
}

SpectrumSpec parse_spectrum(const json& j, const std::string& path) {
  const std::string kind = get_field<std::string>(j, path, "kind");
  if (kind == "explicit") {
    return SpectrumExplicit{
        get_field<std::vector<double>>(j, path, "values")};
  }
  if (kind == "geometric") {
    return SpectrumGeometric{get_field<double>(j, path, "first"),
                             get_field<double>(j, path, "ratio"),
                             get_field<int>(j, path, "count")};
  }
  if (kind == "uniform") {
    return SpectrumUniform{get_field<int>(j, path, "count"),
                           get_field<double>(j, path, "min"),
                           get_field<double>(j, path, "max")};
  }
  if (kind == "uniform_fraction") {
    return SpectrumUniformFraction{get_field<double>(j, path, "fraction"),
                                   get_field_or<double>(j, path, "min", 1.0),
                                   get_field_or<double>(j, path, "max", 10.0)};
  }
  throw ConfigError(path + ".kind", "unknown spectrum kind '" + kind + "'");
}

json spectrum_to_json(const SpectrumSpec& spec) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SpectrumExplicit>) {
          return {{"kind", "explicit"}, {"values", s.values}};
        } else if constexpr (std::is_same_v<T, SpectrumGeometric>) {
          return {{"kind", "geometric"},
                  {"first", s.first},
                  {"ratio", s.ratio},
                  {"count", s.count}};
        } else if constexpr (std::is_same_v<T, SpectrumUniform>) {
          return {{"kind", "uniform"},
                  {"count", s.count},
                  {"min", s.min},
                  {"max", s.max}};
        } else {
          return {{"kind", "uniform_fraction"},
                  {"fraction", s.fraction},
                  {"min", s.min},
                  {"max", s.max}};
        }
      },
      spec);
}

SolverOptions parse_solver(const json& j, const std::string& path) {
  SolverOptions opts;
  opts.rho = get_field_or(j, path, "rho", opts.rho);
  opts.max_iters = get_field_or(j, path, "max_iters", opts.max_iters);
  opts.feas_tol = get_field_or(j, path, "feas_tol", opts.feas_tol);
  opts.psd_tol = get_field_or(j, path, "psd_tol", opts.psd_tol);
  opts.obj_tol = get_field_or(j, path, "obj_tol", opts.obj_tol);
  opts.adaptive_rho = get_field_or(j, path, "adaptive_rho", opts.adaptive_rho);
  return opts;
}

MismatchModel parse_mismatch(const json& j, const std::string& path) {
  const std::string kind = get_field<std::string>(j, path, "kind");
  if (kind == "none") return MismatchNone{};
  if (kind == "rank_one") {
    return MismatchRankOne{get_field_or<double>(j, path, "scale", 1.0)};
  }
  if (kind == "sample_cov") {
    return MismatchSampleCov{get_field<long long>(j, path, "num_samples")};
  }
  if (kind == "sketch") {
    MismatchSketch m;
    m.M = get_field<long long>(j, path, "M");
    m.N = get_field<long long>(j, path, "N");
    m.L = get_field<long long>(j, path, "L");
    m.tau = get_field<double>(j, path, "tau");
    m.sigma2 = get_field_or<double>(j, path, "sigma2", -1.0);
    if (j.contains("solver")) m.solver = parse_solver(j.at("solver"), path + ".solver");
    return m;
  }
  throw ConfigError(path + ".kind", "unknown mismatch kind '" + kind + "'");
}

json mismatch_to_json(const MismatchModel& model) {
  return std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, MismatchNone>) {
          return {{"kind", "none"}};
        } else if constexpr (std::is_same_v<T, MismatchRankOne>) {
          return {{"kind", "rank_one"}, {"scale", m.scale}};
        } else if constexpr (std::is_same_v<T, MismatchSampleCov>) {
          return {{"kind", "sample_cov"}, {"num_samples", m.num_samples}};
        } else {
          return {{"kind", "sketch"}, {"M", m.M},     {"N", m.N},
                  {"L", m.L},         {"tau", m.tau}, {"sigma2", m.sigma2}};
        }
      },
      model);
}

PolicySpec parse_policy(const json& j, const std::string& path) {
  const std::string kind = get_field<std::string>(j, path, "kind");
  if (kind == "info_greedy") return PolicyInfoGreedy{};
  if (kind == "batch") return PolicyBatch{get_field<int>(j, path, "steps")};
  if (kind == "random") return PolicyRandom{get_field<int>(j, path, "steps")};
  throw ConfigError(path + ".kind", "unknown policy kind '" + kind + "'");
}

json policy_to_json(const PolicySpec& policy) {
  return std::visit(
      [](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, PolicyInfoGreedy>) {
          return {{"kind", "info_greedy"}};
        } else if constexpr (std::is_same_v<T, PolicyBatch>) {
          return {{"kind", "batch"}, {"steps", p.steps}};
        } else {
          return {{"kind", "random"}, {"steps", p.steps}};
        }
      },
      policy);
}

int spectrum_count(const SpectrumSpec& spec, int n) {
  return std::visit(
      [n](const auto& s) -> int {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SpectrumExplicit>) {
          return static_cast<int>(s.values.size());
        } else if constexpr (std::is_same_v<T, SpectrumUniformFraction>) {
          return static_cast<int>(std::lround(s.fraction * n));
        } else {
          return s.count;
        }
      },
      spec);
}

Eigen::VectorXd draw_spectrum(const SpectrumSpec& spec, int n, Rng& rng) {
  std::vector<double> values;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SpectrumExplicit>) {
          values = s.values;
        } else if constexpr (std::is_same_v<T, SpectrumGeometric>) {
          double v = s.first;
          for (int i = 0; i < s.count; ++i, v *= s.ratio) values.push_back(v);
        } else if constexpr (std::is_same_v<T, SpectrumUniform>) {
          for (int i = 0; i < s.count; ++i) {
            values.push_back(s.min + (s.max - s.min) * rng.uniform01());
          }
        } else {
          const int count = static_cast<int>(std::lround(s.fraction * n));
          for (int i = 0; i < count; ++i) {
            values.push_back(s.min + (s.max - s.min) * rng.uniform01());
          }
        }
      },
      spec);
  std::sort(values.begin(), values.end(), std::greater<double>());
  return Eigen::Map<Eigen::VectorXd>(values.data(),
                                     static_cast<Eigen::Index>(values.size()));
}

// Haar-ish random orthogonal matrix via QR with sign-fixed R diagonal.
Eigen::MatrixXd random_orthogonal(int n, Rng& rng) {
  Eigen::MatrixXd g(n, n);
  for (int i = 0; i < n; ++i) g.row(i) = rng.normal_vector(n).transpose();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < n; ++i) {
    if (r(i, i) < 0) q.col(i) = -q.col(i);
  }
  return q;
}

struct TrialModels {
  GaussianModel truth;
  std::optional<GaussianModel> assumed;  // empty: no mismatch, use truth
  const GaussianModel& assumed_ref() const {
    return assumed ? *assumed : truth;
  }
};

TrialModels build_models(const ExperimentConfig& cfg, Rng& trial_rng) {
  Rng spectrum_rng = trial_rng.child("spectrum");
  const Eigen::VectorXd lambdas =
      draw_spectrum(cfg.spectrum, cfg.n, spectrum_rng);
  Rng basis_rng = trial_rng.child("basis");
  const Eigen::MatrixXd q = random_orthogonal(cfg.n, basis_rng);

  Eigen::VectorXd padded = Eigen::VectorXd::Zero(cfg.n);
  padded.head(lambdas.size()) = lambdas;
  const Eigen::MatrixXd sigma = q * padded.asDiagonal() * q.transpose();

  TrialModels models{
      GaussianModel::zero_mean(SymMatrix(sigma), cfg.rank_tol), {}};

  Rng mismatch_rng = trial_rng.child("mismatch");
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, MismatchNone>) {
          // assumed stays empty
        } else if constexpr (std::is_same_v<T, MismatchRankOne>) {
          const Eigen::VectorXd e =
              m.scale * mismatch_rng.normal_vector(cfg.n);
          models.assumed = GaussianModel::zero_mean(
              SymMatrix(sigma + e * e.transpose()), cfg.rank_tol);
        } else if constexpr (std::is_same_v<T, MismatchSampleCov>) {
          Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(cfg.n, cfg.n);
          for (long long i = 0; i < m.num_samples; ++i) {
            const Eigen::VectorXd x = sample_signal(models.truth, mismatch_rng);
            acc.noalias() += x * x.transpose();
          }
          acc /= static_cast<double>(m.num_samples);
          models.assumed =
              GaussianModel::zero_mean(SymMatrix(acc), cfg.rank_tol);
        } else {
          const double sk_sigma2 = m.sigma2 < 0.0 ? cfg.sigma2 : m.sigma2;
          const SketchEnsemble ensemble = generate_sketches(
              models.truth, m.M, m.N, m.L, sk_sigma2, mismatch_rng);
          const RecoveryResult rec =
              recover_covariance_detailed(ensemble, m.tau, m.solver);
          models.assumed =
              GaussianModel::zero_mean(rec.x, cfg.rank_tol);
        }
      },
      cfg.mismatch);
  return models;
}

std::vector<double> batch_powers(const EigenDecomposition& ed, int k,
                                 double stop_threshold,
                                 const SensingConfig& scfg) {
  std::vector<double> powers;
  powers.reserve(k);
  for (int i = 0; i < k; ++i) {
    const double lambda = i < ed.eigenvalues.size() ? ed.eigenvalues[i] : 0.0;
    powers.push_back(
        lambda > 0.0
            ? std::max(0.0, power_for_eigenvalue(lambda, stop_threshold,
                                                 scfg.sigma2,
                                                 scfg.power_policy))
            : 0.0);
  }
  return powers;
}

std::vector<std::string> unique_policy_names(
    const std::vector<PolicySpec>& policies) {
  std::vector<std::string> names;
  std::map<std::string, int> seen;
  for (const auto& policy : policies) {
    std::string name = policy_name(policy);
    const int count = ++seen[name];
    if (count > 1) name += "_" + std::to_string(count);
    names.push_back(name);
  }
  // Retroactively suffix the first duplicate as well.
  for (auto& [base, count] : seen) {
    if (count > 1) {
      for (auto& name : names) {
        if (name == base) {
          name = base + "_1";
          break;
        }
      }
    }
  }
  return names;
}

struct Stats {
  double mean = 0.0;
  double median = 0.0;
  double stddev = 0.0;
};

Stats compute_stats(std::vector<double> values) {
  Stats out;
  const std::size_t n = values.size();
  if (n == 0) return out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (const double v : values) ss += (v - out.mean) * (v - out.mean);
  out.stddev = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  std::sort(values.begin(), values.end());
  out.median = n % 2 == 1 ? values[n / 2]
                          : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return out;
}

}  // namespace

std::string policy_name(const PolicySpec& policy) {
  return std::visit(
      [](const auto& p) -> std::string {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, PolicyInfoGreedy>) {
          return "info_greedy";
        } else if constexpr (std::is_same_v<T, PolicyBatch>) {
          return "batch";
        } else {
          return "random";
        }
      },
      policy);
}

SensingConfig ExperimentConfig::sensing_config() const {
  SensingConfig scfg;
  scfg.sigma2 = sigma2;
  scfg.epsilon = epsilon;
  scfg.p = p;
  scfg.max_steps = max_steps;
  scfg.power_policy = power_policy;
  scfg.rank_tol = rank_tol;
  scfg.detail = trace_detail;
  return scfg;
}

void ExperimentConfig::validate() const {
  if (n < 1) throw ConfigError("n", "must be >= 1");
  if (trials < 1) throw ConfigError("trials", "must be >= 1");
  if (policies.empty()) throw ConfigError("policies", "must not be empty");
  if (sigma2 <= 0.0) throw ConfigError("sigma2", "must be > 0");
  if (epsilon <= 0.0) throw ConfigError("epsilon", "must be > 0");
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("p", "must lie in (0,1)");
  if (rank_tol <= 0.0) throw ConfigError("rank_tol", "must be > 0");
  if (max_steps < 0) throw ConfigError("max_steps", "must be >= 0");
  if (workers < 0) throw ConfigError("workers", "must be >= 0");

  const int count = spectrum_count(spectrum, n);
  if (count < 0 || count > n) {
    throw ConfigError("spectrum", "eigenvalue count must lie in [0, n]");
  }
  if (s && *s != count) {
    throw ConfigError("s", "does not match the spectrum's eigenvalue count (" +
                               std::to_string(count) + ")");
  }
  std::visit(
      [](const auto& spec) {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, SpectrumExplicit>) {
          for (const double v : spec.values) {
            if (!(v >= 0.0) || !std::isfinite(v)) {
              throw ConfigError("spectrum.values",
                                "must be finite and nonnegative");
            }
          }
        } else if constexpr (std::is_same_v<T, SpectrumGeometric>) {
          if (spec.first <= 0.0 || spec.ratio <= 0.0) {
            throw ConfigError("spectrum", "first and ratio must be > 0");
          }
        } else if constexpr (std::is_same_v<T, SpectrumUniform>) {
          if (!(spec.min > 0.0 && spec.max >= spec.min)) {
            throw ConfigError("spectrum", "requires 0 < min <= max");
          }
        } else {
          if (!(spec.fraction >= 0.0 && spec.fraction <= 1.0)) {
            throw ConfigError("spectrum.fraction", "must lie in [0,1]");
          }
          if (!(spec.min > 0.0 && spec.max >= spec.min)) {
            throw ConfigError("spectrum", "requires 0 < min <= max");
          }
        }
      },
      spectrum);

  std::visit(
      [](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, MismatchRankOne>) {
          if (m.scale < 0.0) throw ConfigError("mismatch.scale", "must be >= 0");
        } else if constexpr (std::is_same_v<T, MismatchSampleCov>) {
          if (m.num_samples < 1) {
            throw ConfigError("mismatch.num_samples", "must be >= 1");
          }
        } else if constexpr (std::is_same_v<T, MismatchSketch>) {
          if (m.M < 1 || m.N < 1 || m.L < 1) {
            throw ConfigError("mismatch", "M, N, L must be >= 1");
          }
          if (m.tau < 0.0) throw ConfigError("mismatch.tau", "must be >= 0");
        }
      },
      mismatch);

  for (std::size_t i = 0; i < policies.size(); ++i) {
    std::visit(
        [i](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (!std::is_same_v<T, PolicyInfoGreedy>) {
            if (p.steps < 0) {
              throw ConfigError("policies[" + std::to_string(i) + "].steps",
                                "must be >= 0");
            }
          }
        },
        policies[i]);
  }
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  cfg.schema_version = get_field_or(j, "", "schema_version", 1);
  if (cfg.schema_version != 1) {
    throw ConfigError("schema_version", "unsupported version");
  }
  cfg.n = get_field<int>(j, "", "n");
  if (j.contains("s")) cfg.s = get_field<int>(j, "", "s");
  if (!j.contains("spectrum")) {
    throw ConfigError("spectrum", "missing required field");
  }
  cfg.spectrum = parse_spectrum(j.at("spectrum"), "spectrum");
  if (j.contains("mismatch")) {
    cfg.mismatch = parse_mismatch(j.at("mismatch"), "mismatch");
  }
  if (!j.contains("policies") || !j.at("policies").is_array()) {
    throw ConfigError("policies", "missing or not an array");
  }
  for (std::size_t i = 0; i < j.at("policies").size(); ++i) {
    cfg.policies.push_back(parse_policy(
        j.at("policies")[i], "policies[" + std::to_string(i) + "]"));
  }
  cfg.sigma2 = get_field<double>(j, "", "sigma2");
  cfg.epsilon = get_field<double>(j, "", "epsilon");
  cfg.p = get_field<double>(j, "", "p");
  cfg.max_steps = get_field_or(j, "", "max_steps", 0);
  if (j.contains("power_policy")) {
    const json& pp = j.at("power_policy");
    const std::string kind = get_field<std::string>(pp, "power_policy", "kind");
    if (kind == "nominal") {
      cfg.power_policy = NominalPower{};
    } else if (kind == "robust") {
      cfg.power_policy =
          RobustPower{get_field<double>(pp, "power_policy", "delta_s")};
    } else {
      throw ConfigError("power_policy.kind", "unknown kind '" + kind + "'");
    }
  }
  cfg.rank_tol = get_field_or(j, "", "rank_tol", 1e-8);
  cfg.trials = get_field_or(j, "", "trials", 1);
  cfg.master_seed = get_field_or<std::uint64_t>(j, "", "master_seed", 0);
  cfg.output_dir = get_field_or<std::string>(j, "", "output_dir", "");
  cfg.workers = get_field_or(j, "", "workers", 0);
  const std::string detail =
      get_field_or<std::string>(j, "", "trace_detail", "scalars");
  if (detail == "scalars") {
    cfg.trace_detail = TraceDetail::Scalars;
  } else if (detail == "diagnostics") {
    cfg.trace_detail = TraceDetail::Diagnostics;
  } else if (detail == "full") {
    cfg.trace_detail = TraceDetail::Full;
  } else {
    throw ConfigError("trace_detail", "expected scalars|diagnostics|full");
  }
  cfg.save_traces = get_field_or(j, "", "save_traces", true);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config", "invalid JSON in '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

json config_to_json(const ExperimentConfig& cfg) {
  json j{{"schema_version", cfg.schema_version},
         {"n", cfg.n},
         {"spectrum", spectrum_to_json(cfg.spectrum)},
         {"mismatch", mismatch_to_json(cfg.mismatch)},
         {"sigma2", cfg.sigma2},
         {"epsilon", cfg.epsilon},
         {"p", cfg.p},
         {"max_steps", cfg.max_steps},
         {"rank_tol", cfg.rank_tol},
         {"trials", cfg.trials},
         {"master_seed", cfg.master_seed},
         {"output_dir", cfg.output_dir},
         {"workers", cfg.workers},
         {"save_traces", cfg.save_traces}};
  if (cfg.s) j["s"] = *cfg.s;
  json policies = json::array();
  for (const auto& p : cfg.policies) policies.push_back(policy_to_json(p));
  j["policies"] = policies;
  if (const auto* robust = std::get_if<RobustPower>(&cfg.power_policy)) {
    j["power_policy"] = {{"kind", "robust"}, {"delta_s", robust->delta_s}};
  } else {
    j["power_policy"] = {{"kind", "nominal"}};
  }
  switch (cfg.trace_detail) {
    case TraceDetail::Scalars: j["trace_detail"] = "scalars"; break;
    case TraceDetail::Diagnostics: j["trace_detail"] = "diagnostics"; break;
    case TraceDetail::Full: j["trace_detail"] = "full"; break;
  }
  return j;
}

TrialRun run_trial(const ExperimentConfig& cfg, int trial) {
  cfg.validate();
  Rng root(cfg.master_seed);
  Rng trial_rng = root.child(static_cast<std::uint64_t>(trial));

  const TrialModels models = build_models(cfg, trial_rng);
  const GaussianModel& truth = models.truth;
  const GaussianModel& assumed = models.assumed_ref();

  Rng signal_rng = trial_rng.child("signal");
  const Eigen::VectorXd x = sample_signal(truth, signal_rng);

  const SensingConfig scfg = cfg.sensing_config();
  const double thresh =
      cfg.epsilon * cfg.epsilon / chi2_quantile(cfg.n, cfg.p);

  TrialRun run;
  run.spectrum = truth.eigen().eigenvalues;
  for (const auto& policy : cfg.policies) {
    // Every policy replays the same noise stream; noise draw k is shared
    // across policies at step k.
    Rng noise_rng = trial_rng.child("noise");
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, PolicyInfoGreedy>) {
            run.traces.push_back(
                run_info_greedy_with_signal(assumed, truth, scfg, x, noise_rng));
          } else if constexpr (std::is_same_v<T, PolicyBatch>) {
            run.traces.push_back(run_batch_with_signal(assumed, truth, scfg,
                                                       p.steps, x, noise_rng));
          } else {
            const std::vector<double> powers = batch_powers(
                eig_sym(assumed.covariance()), p.steps, thresh, scfg);
            Rng direction_rng = trial_rng.child("directions");
            run.traces.push_back(run_random_with_signal(
                truth, scfg, p.steps, powers, x, noise_rng, direction_rng));
          }
        },
        policy);
  }
  return run;
}

nlohmann::json run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.output_dir.empty()) {
    throw ConfigError("output_dir", "must be set for run_experiment");
  }

  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  fs::create_directories(fs::path(cfg.output_dir) / "plotdata", ec);
  if (cfg.save_traces) {
    fs::create_directories(fs::path(cfg.output_dir) / "traces", ec);
  }
  if (!fs::is_directory(cfg.output_dir)) {
    throw IOError("run_experiment: cannot create output dir '" +
                  cfg.output_dir + "'");
  }

  std::vector<TrialRun> runs(cfg.trials);
  {
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const int workers = cfg.workers > 0
                            ? cfg.workers
                            : static_cast<int>(std::min<unsigned>(
                                  hw, static_cast<unsigned>(cfg.trials)));
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto work = [&]() {
      for (;;) {
        const int t = next.fetch_add(1);
        if (t >= cfg.trials) return;
        try {
          runs[t] = run_trial(cfg, t);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  const std::vector<std::string> names = unique_policy_names(cfg.policies);

  // results.csv, ordered by trial then by configured policy order.
  {
    std::ofstream csv(fs::path(cfg.output_dir) / "results.csv");
    if (!csv) throw IOError("run_experiment: cannot write results.csv");
    csv << "trial,policy,error,total_power,steps,delta_final\n";
    for (int t = 0; t < cfg.trials; ++t) {
      for (std::size_t i = 0; i < cfg.policies.size(); ++i) {
        const SensingTrace& trace = runs[t].traces[i];
        csv << t << ',' << names[i] << ',' << fmt17(trace.error) << ','
            << fmt17(trace.total_power) << ',' << trace.steps.size() << ','
            << fmt17(trace.delta_final) << '\n';
      }
    }
  }

  if (cfg.save_traces) {
    const bool vectors = cfg.trace_detail == TraceDetail::Full;
    for (int t = 0; t < cfg.trials; ++t) {
      for (std::size_t i = 0; i < cfg.policies.size(); ++i) {
        const fs::path path = fs::path(cfg.output_dir) / "traces" /
                              ("trial_" + std::to_string(t) + "_" + names[i] +
                               ".json");
        std::ofstream out(path);
        if (!out) throw IOError("run_experiment: cannot write " + path.string());
        out << trace_to_json(runs[t].traces[i], vectors).dump(2) << "\n";
      }
    }
  }

  // plotdata/<policy>.csv: error vs measurement count, raw and normalized.
  for (std::size_t i = 0; i < cfg.policies.size(); ++i) {
    std::size_t max_k = 0;
    for (const auto& run : runs) {
      max_k = std::max(max_k, run.traces[i].steps.size());
    }
    std::ofstream out(fs::path(cfg.output_dir) / "plotdata" /
                      (names[i] + ".csv"));
    if (!out) throw IOError("run_experiment: cannot write plotdata");
    out << "k,mean_error,mean_error_norm\n";
    for (std::size_t k = 0; k <= max_k; ++k) {
      double sum = 0.0;
      double sum_norm = 0.0;
      for (const auto& run : runs) {
        const SensingTrace& trace = run.traces[i];
        double err;
        if (k == 0) {
          err = trace.signal.norm();
        } else if (k <= trace.steps.size()) {
          err = trace.steps[k - 1].error_after;
        } else {
          err = trace.error;  // stopped early; error no longer changes
        }
        sum += err;
        const double base = trace.signal.norm();
        sum_norm += base > 0.0 ? err / base : 0.0;
      }
      out << k << ',' << fmt17(sum / cfg.trials) << ','
          << fmt17(sum_norm / cfg.trials) << '\n';
    }
  }

  json summary{{"schema_version", 1}, {"config", config_to_json(cfg)}};
  json per_policy = json::object();
  for (std::size_t i = 0; i < cfg.policies.size(); ++i) {
    std::vector<double> errors, powers;
    double steps_sum = 0.0;
    for (const auto& run : runs) {
      errors.push_back(run.traces[i].error);
      powers.push_back(run.traces[i].total_power);
      steps_sum += static_cast<double>(run.traces[i].steps.size());
    }
    const Stats err_stats = compute_stats(errors);
    const Stats pow_stats = compute_stats(powers);
    per_policy[names[i]] = {
        {"error",
         {{"mean", err_stats.mean},
          {"median", err_stats.median},
          {"std", err_stats.stddev}}},
        {"total_power",
         {{"mean", pow_stats.mean},
          {"median", pow_stats.median},
          {"std", pow_stats.stddev}}},
        {"mean_steps", steps_sum / cfg.trials}};
  }
  summary["policies"] = per_policy;

  std::ofstream out(fs::path(cfg.output_dir) / "summary.json");
  if (!out) throw IOError("run_experiment: cannot write summary.json");
  out << summary.dump(2) << "\n";
  return summary;
}

nlohmann::json trace_to_json(const SensingTrace& trace, bool include_vectors) {
  json j{{"schema_version", 1},
         {"policy", trace.policy},
         {"n", trace.n},
         {"s", trace.s},
         {"sigma2", trace.sigma2},
         {"epsilon", trace.epsilon},
         {"p", trace.p},
         {"stop_threshold", trace.stop_threshold},
         {"delta_initial", trace.delta_initial},
         {"initial_assumed_trace", trace.initial_assumed_trace},
         {"initial_true_trace", trace.initial_true_trace},
         {"entropy_assumed_initial", trace.entropy_assumed_initial},
         {"entropy_true_initial", trace.entropy_true_initial},
         {"error", trace.error},
         {"total_power", trace.total_power},
         {"delta_final", trace.delta_final},
         {"final_assumed_norm", trace.final_assumed_norm},
         {"final_true_norm", trace.final_true_norm},
         {"flagged", trace.flagged},
         {"stopped_normally", trace.stopped_normally}};
  json steps = json::array();
  for (const auto& rec : trace.steps) {
    json step{{"k", rec.k},
              {"beta", rec.beta},
              {"y", rec.y},
              {"lambda_hat", rec.lambda_hat},
              {"assumed_trace", rec.assumed_trace},
              {"true_trace", rec.true_trace},
              {"error_after", rec.error_after},
              {"delta", rec.delta},
              {"entropy_assumed", rec.entropy_assumed},
              {"entropy_true", rec.entropy_true}};
    if (include_vectors) {
      step["direction"] = std::vector<double>(
          rec.direction.data(), rec.direction.data() + rec.direction.size());
      if (rec.theta.size() > 0) {
        step["theta"] = std::vector<double>(rec.theta.data(),
                                            rec.theta.data() + rec.theta.size());
      }
    }
    steps.push_back(std::move(step));
  }
  j["steps"] = steps;
  if (include_vectors) {
    j["signal"] = std::vector<double>(trace.signal.data(),
                                      trace.signal.data() + trace.signal.size());
    j["x_hat"] = std::vector<double>(trace.x_hat.data(),
                                     trace.x_hat.data() + trace.x_hat.size());
  }
  return j;
}

SensingTrace trace_from_json(const json& j) {
  SensingTrace trace;
  trace.policy = get_field<std::string>(j, "trace", "policy");
  trace.n = get_field<int>(j, "trace", "n");
  trace.s = get_field<int>(j, "trace", "s");
  trace.sigma2 = get_field<double>(j, "trace", "sigma2");
  trace.epsilon = get_field<double>(j, "trace", "epsilon");
  trace.p = get_field<double>(j, "trace", "p");
  trace.stop_threshold = get_field<double>(j, "trace", "stop_threshold");
  trace.delta_initial = get_field<double>(j, "trace", "delta_initial");
  trace.initial_assumed_trace =
      get_field<double>(j, "trace", "initial_assumed_trace");
  trace.initial_true_trace =
      get_field<double>(j, "trace", "initial_true_trace");
  trace.entropy_assumed_initial =
      get_field_or(j, "trace", "entropy_assumed_initial", 0.0);
  trace.entropy_true_initial =
      get_field_or(j, "trace", "entropy_true_initial", 0.0);
  trace.error = get_field<double>(j, "trace", "error");
  trace.total_power = get_field<double>(j, "trace", "total_power");
  trace.delta_final = get_field<double>(j, "trace", "delta_final");
  trace.final_assumed_norm =
      get_field_or(j, "trace", "final_assumed_norm", 0.0);
  trace.final_true_norm = get_field_or(j, "trace", "final_true_norm", 0.0);
  trace.flagged = get_field_or(j, "trace", "flagged", false);
  trace.stopped_normally = get_field_or(j, "trace", "stopped_normally", false);
  if (j.contains("steps")) {
    for (const auto& sj : j.at("steps")) {
      MeasurementRecord rec;
      rec.k = get_field<int>(sj, "step", "k");
      rec.beta = get_field<double>(sj, "step", "beta");
      rec.y = get_field<double>(sj, "step", "y");
      rec.lambda_hat = get_field<double>(sj, "step", "lambda_hat");
      rec.assumed_trace = get_field<double>(sj, "step", "assumed_trace");
      rec.true_trace = get_field<double>(sj, "step", "true_trace");
      rec.error_after = get_field<double>(sj, "step", "error_after");
      rec.delta = get_field_or(sj, "step", "delta", 0.0);
      rec.entropy_assumed = get_field_or(sj, "step", "entropy_assumed", 0.0);
      rec.entropy_true = get_field_or(sj, "step", "entropy_true", 0.0);
      if (sj.contains("direction")) {
        const auto v = sj.at("direction").get<std::vector<double>>();
        rec.direction =
            Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
      }
      trace.steps.push_back(std::move(rec));
    }
  }
  if (j.contains("signal")) {
    const auto v = j.at("signal").get<std::vector<double>>();
    trace.signal = Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
  }
  if (j.contains("x_hat")) {
    const auto v = j.at("x_hat").get<std::vector<double>>();
    trace.x_hat = Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
  }
  return trace;
}

nlohmann::json bound_report_to_json(const BoundReport& report) {
  json steps = json::array();
  for (const auto& step : report.steps) {
    steps.push_back({{"k", step.k},
                     {"observed", step.observed},
                     {"bound", step.bound},
                     {"condition_satisfied", step.condition_satisfied},
                     {"holds", step.holds}});
  }
  return {{"schema_version", 1},
          {"hypothesis_satisfied", report.hypothesis_satisfied},
          {"all_hold", report.all_hold},
          {"steps", steps}};
}

void bound_report_to_csv(const BoundReport& report, std::ostream& out) {
  out << "k,observed,bound,condition_satisfied,holds\n";
  for (const auto& step : report.steps) {
    out << step.k << ',' << fmt17(step.observed) << ',' << fmt17(step.bound)
        << ',' << (step.condition_satisfied ? 1 : 0) << ','
        << (step.holds ? 1 : 0) << '\n';
  }
}

}  // namespace igsense
