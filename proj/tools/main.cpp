// Command line front end: single runs, batched experiments, sketch recovery,
// bound reports and chi-squared quantiles.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "igsense/harness.hpp"

namespace {

using igsense::ExperimentConfig;
using nlohmann::json;

int cmd_quantile(int n, double p) {
  std::printf("%.12g\n", igsense::chi2_quantile(n, p));
  return 0;
}

int cmd_sense(const std::string& config_path, int trial,
              const std::string& output, bool vectors) {
  ExperimentConfig cfg = igsense::load_config(config_path);
  const igsense::TrialRun run = igsense::run_trial(cfg, trial);

  json out{{"trial", trial},
           {"spectrum", std::vector<double>(
                            run.spectrum.data(),
                            run.spectrum.data() + run.spectrum.size())}};
  json traces = json::array();
  for (const auto& trace : run.traces) {
    traces.push_back(igsense::trace_to_json(trace, vectors));
  }
  out["traces"] = traces;

  if (output.empty()) {
    std::cout << out.dump(2) << "\n";
  } else {
    std::ofstream f(output);
    if (!f) throw igsense::IOError("cannot write '" + output + "'");
    f << out.dump(2) << "\n";
  }
  for (const auto& trace : run.traces) {
    std::fprintf(stderr, "%s: steps=%zu error=%.6g power=%.6g%s\n",
                 trace.policy.c_str(), trace.steps.size(), trace.error,
                 trace.total_power, trace.flagged ? " [flagged]" : "");
  }
  return 0;
}

int cmd_experiment(const std::string& config_path,
                   const std::string& output_dir) {
  ExperimentConfig cfg = igsense::load_config(config_path);
  if (!output_dir.empty()) cfg.output_dir = output_dir;
  const json summary = igsense::run_experiment(cfg);
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_sketch_recover(const std::string& prefix, double tau,
                       const std::string& output, int max_iters) {
  const igsense::SketchEnsemble ensemble = igsense::load_ensemble(prefix);
  igsense::SolverOptions opts;
  if (max_iters > 0) opts.max_iters = max_iters;
  const igsense::RecoveryResult rec =
      igsense::recover_covariance_detailed(ensemble, tau, opts);

  const Eigen::MatrixXd& x = rec.x.mat();
  json rows = json::array();
  for (int i = 0; i < x.rows(); ++i) {
    rows.push_back(std::vector<double>(x.row(i).begin(), x.row(i).end()));
  }
  json out{{"converged", rec.converged},
           {"iterations", rec.iterations},
           {"l1_residual", rec.l1_residual},
           {"split_residual", rec.split_residual},
           {"trace", x.trace()},
           {"matrix", rows}};
  if (output.empty()) {
    std::cout << out.dump(2) << "\n";
  } else {
    std::ofstream f(output);
    if (!f) throw igsense::IOError("cannot write '" + output + "'");
    f << out.dump(2) << "\n";
  }
  return rec.converged ? 0 : 2;
}

int cmd_bounds(const std::string& trace_path, double zeta, int s,
               const std::string& format) {
  std::ifstream in(trace_path);
  if (!in) {
    throw igsense::ConfigError("trace", "cannot open '" + trace_path + "'");
  }
  json j;
  in >> j;
  const igsense::SensingTrace trace = igsense::trace_from_json(j);
  const igsense::BoundReport report =
      igsense::entropy_bound(trace, zeta, s > 0 ? s : trace.s);
  if (format == "csv") {
    igsense::bound_report_to_csv(report, std::cout);
  } else {
    std::cout << igsense::bound_report_to_json(report).dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential adaptive sensing experiments"};
  app.require_subcommand(1);

  auto* sense = app.add_subcommand(
      "sense", "Run the configured policies on one trial and print traces");
  std::string sense_config, sense_output;
  int sense_trial = 0;
  bool sense_vectors = false;
  sense->add_option("--config", sense_config, "Experiment config JSON")
      ->required();
  sense->add_option("--trial", sense_trial, "Trial index (default 0)");
  sense->add_option("--output", sense_output, "Write the JSON here");
  sense->add_flag("--vectors", sense_vectors,
                  "Include per-step vectors in the trace JSON");

  auto* experiment = app.add_subcommand(
      "experiment", "Run all trials and write results under the output dir");
  std::string exp_config, exp_output_dir;
  experiment->add_option("--config", exp_config, "Experiment config JSON")
      ->required();
  experiment->add_option("--output-dir", exp_output_dir,
                         "Override the config's output_dir");

  auto* sketch = app.add_subcommand(
      "sketch-recover", "Recover a covariance from a saved sketch ensemble");
  std::string sk_prefix, sk_output;
  double sk_tau = 0.0;
  int sk_max_iters = 0;
  sketch->add_option("--input", sk_prefix, "Ensemble path prefix")->required();
  sketch->add_option("--tau", sk_tau, "l1 feasibility radius");
  sketch->add_option("--output", sk_output, "Write the JSON here");
  sketch->add_option("--max-iters", sk_max_iters, "Solver iteration cap");

  auto* bounds = app.add_subcommand(
      "bounds", "Evaluate the entropy bound along a saved trace");
  std::string b_trace, b_format = "json";
  double b_zeta = 0.5;
  int b_s = 0;
  bounds->add_option("--trace", b_trace, "Trace JSON file")->required();
  bounds->add_option("--zeta", b_zeta, "Mismatch budget share in (0,1)");
  bounds->add_option("--s", b_s, "Signal rank (default: from the trace)");
  bounds->add_option("--format", b_format, "json or csv")
      ->check(CLI::IsMember({"json", "csv"}));

  auto* quantile =
      app.add_subcommand("quantile", "Print the chi-squared quantile");
  int q_n = 1;
  double q_p = 0.9;
  quantile->add_option("--n", q_n, "Degrees of freedom")->required();
  quantile->add_option("--p", q_p, "Probability in (0,1)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*sense) return cmd_sense(sense_config, sense_trial, sense_output,
                                 sense_vectors);
    if (*experiment) return cmd_experiment(exp_config, exp_output_dir);
    if (*sketch) return cmd_sketch_recover(sk_prefix, sk_tau, sk_output,
                                           sk_max_iters);
    if (*bounds) return cmd_bounds(b_trace, b_zeta, b_s, b_format);
    if (*quantile) return cmd_quantile(q_n, q_p);
  } catch (const igsense::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const igsense::InvalidInput& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
