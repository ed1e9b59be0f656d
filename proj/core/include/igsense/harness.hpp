#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "igsense/analysis.hpp"
#include "igsense/sensing.hpp"
#include "igsense/sketch.hpp"

namespace igsense {

// Spectrum of the true covariance: explicit eigenvalues, a geometric decay,
// a fixed count of uniform draws, or a "fraction of n nonzero" style draw.
struct SpectrumExplicit {
  std::vector<double> values;
};
struct SpectrumGeometric {
  double first = 1.0;
  double ratio = 0.5;
  int count = 1;
};
struct SpectrumUniform {
  int count = 1;
  double min = 1.0;
  double max = 10.0;
};
struct SpectrumUniformFraction {
  double fraction = 0.05;
  double min = 1.0;
  double max = 10.0;
};
using SpectrumSpec = std::variant<SpectrumExplicit, SpectrumGeometric,
                                  SpectrumUniform, SpectrumUniformFraction>;

struct MismatchNone {};
struct MismatchRankOne {
  double scale = 1.0;
};
struct MismatchSampleCov {
  long long num_samples = 1;
};
struct MismatchSketch {
  long long M = 0;
  long long N = 0;
  long long L = 0;
  double tau = 0.0;
  double sigma2 = -1.0;  // negative: reuse the experiment noise variance
  SolverOptions solver;
};
using MismatchModel =
    std::variant<MismatchNone, MismatchRankOne, MismatchSampleCov,
                 MismatchSketch>;

struct PolicyInfoGreedy {};
struct PolicyBatch {
  int steps = 0;
};
struct PolicyRandom {
  int steps = 0;
};
using PolicySpec = std::variant<PolicyInfoGreedy, PolicyBatch, PolicyRandom>;

std::string policy_name(const PolicySpec& policy);

struct ExperimentConfig {
  int schema_version = 1;
  int n = 0;
  std::optional<int> s;
  SpectrumSpec spectrum;
  MismatchModel mismatch = MismatchNone{};
  std::vector<PolicySpec> policies;
  double sigma2 = 1.0;
  double epsilon = 0.1;
  double p = 0.9;
  int max_steps = 0;
  PowerPolicy power_policy = NominalPower{};
  double rank_tol = 1e-8;
  int trials = 1;
  std::uint64_t master_seed = 0;
  std::string output_dir;
  int workers = 0;  // 0: hardware concurrency
  TraceDetail trace_detail = TraceDetail::Scalars;
  bool save_traces = true;

  SensingConfig sensing_config() const;
  void validate() const;  // throws ConfigError with the offending field path
};

ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

struct TrialResult {
  int trial = 0;
  std::string policy;
  double error = 0.0;
  double total_power = 0.0;
  int steps = 0;
  double delta_final = 0.0;
};

/// One trial's models and traces; also used by the `sense` subcommand.
struct TrialRun {
  Eigen::VectorXd spectrum;
  std::vector<SensingTrace> traces;  // one per configured policy
};

TrialRun run_trial(const ExperimentConfig& cfg, int trial);

/// Runs all trials (optionally across worker threads), writes results.csv,
/// summary.json, traces/*.json and plotdata/*.csv under cfg.output_dir, and
/// returns the summary document.
nlohmann::json run_experiment(const ExperimentConfig& cfg);

nlohmann::json trace_to_json(const SensingTrace& trace, bool include_vectors);
SensingTrace trace_from_json(const nlohmann::json& j);

nlohmann::json bound_report_to_json(const BoundReport& report);
void bound_report_to_csv(const BoundReport& report, std::ostream& out);

}  // namespace igsense
