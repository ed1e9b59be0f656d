#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "igsense/harness.hpp"

using namespace igsense;
namespace fs = std::filesystem;

namespace {

nlohmann::json tiny_config_json() {
  return nlohmann::json{
      {"n", 4},
      {"spectrum",
       {{"kind", "explicit"}, {"values", {3.0, 2.0}}}},
      {"mismatch", {{"kind", "none"}}},
      {"policies", nlohmann::json::array({{{"kind", "info_greedy"}}})},
      {"sigma2", 1.0},
      {"epsilon", 1.5},
      {"p", 0.9},
      {"trials", 2},
      {"master_seed", 7},
  };
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_SUITE_BEGIN("harness");

TEST_CASE("config parsing reports the offending field path") {
  nlohmann::json j = tiny_config_json();
  j.erase("n");
  CHECK_THROWS_WITH_AS(config_from_json(j), doctest::Contains("n"),
                       ConfigError);

  j = tiny_config_json();
  j["p"] = 1.5;
  try {
    config_from_json(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field == "p");
  }

  j = tiny_config_json();
  j["spectrum"]["kind"] = "bogus";
  try {
    config_from_json(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field == "spectrum.kind");
  }

  j = tiny_config_json();
  j["policies"][0]["kind"] = "batch";  // missing steps
  try {
    config_from_json(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field == "policies[0].steps");
  }
}

TEST_CASE("config round trips through JSON") {
  ExperimentConfig cfg = config_from_json(tiny_config_json());
  cfg.s = 2;
  cfg.mismatch = MismatchRankOne{0.5};
  cfg.policies.push_back(PolicyBatch{3});
  cfg.power_policy = RobustPower{0.01};
  const ExperimentConfig back = config_from_json(config_to_json(cfg));
  CHECK(config_to_json(back) == config_to_json(cfg));
}

TEST_CASE("declared rank must match the spectrum") {
  nlohmann::json j = tiny_config_json();
  j["s"] = 3;  // spectrum has two values
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
  j["s"] = 2;
  CHECK_NOTHROW(config_from_json(j));
}

TEST_CASE("a tiny trial is finite and deterministic") {
  const ExperimentConfig cfg = config_from_json(tiny_config_json());
  const TrialRun a = run_trial(cfg, 0);
  const TrialRun b = run_trial(cfg, 0);
  REQUIRE(a.traces.size() == 1);
  CHECK(std::isfinite(a.traces[0].error));
  CHECK(a.traces[0].error == b.traces[0].error);
  CHECK(a.traces[0].total_power == b.traces[0].total_power);
  CHECK((a.spectrum - b.spectrum).norm() == 0.0);
}

TEST_CASE("trial results do not depend on the trial count") {
  ExperimentConfig cfg = config_from_json(tiny_config_json());
  cfg.trials = 2;
  const TrialRun small = run_trial(cfg, 1);
  cfg.trials = 40;
  const TrialRun large = run_trial(cfg, 1);
  CHECK(small.traces[0].error == large.traces[0].error);
  CHECK((small.traces[0].signal - large.traces[0].signal).norm() == 0.0);
}

TEST_CASE("matched trials take one step per eigenvalue above threshold") {
  ExperimentConfig cfg = config_from_json(tiny_config_json());
  // threshold = eps^2 / chi2_4(0.9); both 3.0 and 2.0 lie above it.
  const double thresh =
      cfg.epsilon * cfg.epsilon / chi2_quantile(cfg.n, cfg.p);
  REQUIRE(thresh < 2.0);
  const TrialRun run = run_trial(cfg, 0);
  CHECK(run.traces[0].steps.size() == 2);
  CHECK(run.traces[0].stopped_normally);
}

TEST_CASE("run_experiment writes deterministic outputs") {
  ExperimentConfig cfg = config_from_json(tiny_config_json());
  cfg.policies.push_back(PolicyRandom{2});
  const fs::path dir1 = fresh_dir("igsense_exp_a");
  const fs::path dir2 = fresh_dir("igsense_exp_b");

  cfg.output_dir = dir1.string();
  const nlohmann::json s1 = run_experiment(cfg);
  cfg.output_dir = dir2.string();
  cfg.workers = 2;
  const nlohmann::json s2 = run_experiment(cfg);

  const std::string csv1 = slurp(dir1 / "results.csv");
  CHECK(csv1 == slurp(dir2 / "results.csv"));
  CHECK(csv1.substr(0, csv1.find('\n')) ==
        "trial,policy,error,total_power,steps,delta_final");
  CHECK(s1.at("policies") == s2.at("policies"));

  CHECK(fs::exists(dir1 / "summary.json"));
  CHECK(fs::exists(dir1 / "plotdata" / "info_greedy.csv"));
  CHECK(fs::exists(dir1 / "plotdata" / "random.csv"));
  CHECK(fs::exists(dir1 / "traces" / "trial_0_info_greedy.json"));

  const std::string plot = slurp(dir1 / "plotdata" / "info_greedy.csv");
  CHECK(plot.substr(0, plot.find('\n')) == "k,mean_error,mean_error_norm");

  fs::remove_all(dir1);
  fs::remove_all(dir2);
}

TEST_CASE("traces round trip through JSON") {
  ExperimentConfig cfg = config_from_json(tiny_config_json());
  cfg.trace_detail = TraceDetail::Full;
  const TrialRun run = run_trial(cfg, 0);
  const SensingTrace& trace = run.traces[0];
  const SensingTrace back = trace_from_json(trace_to_json(trace, true));
  CHECK(back.policy == trace.policy);
  CHECK(back.error == trace.error);
  CHECK(back.total_power == trace.total_power);
  CHECK(back.stop_threshold == trace.stop_threshold);
  CHECK(back.steps.size() == trace.steps.size());
  CHECK((back.signal - trace.signal).norm() == 0.0);
  CHECK((back.x_hat - trace.x_hat).norm() == 0.0);
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    CHECK(back.steps[i].beta == trace.steps[i].beta);
    CHECK(back.steps[i].y == trace.steps[i].y);
    CHECK((back.steps[i].direction - trace.steps[i].direction).norm() == 0.0);
  }
}

TEST_CASE("bound reports serialize to JSON and CSV") {
  BoundReport report;
  report.hypothesis_satisfied = true;
  report.all_hold = true;
  BoundStep step;
  step.k = 1;
  step.observed = 0.5;
  step.bound = 1.0;
  step.condition_satisfied = true;
  step.holds = true;
  report.steps.push_back(step);

  const nlohmann::json j = bound_report_to_json(report);
  CHECK(j.at("all_hold") == true);
  CHECK(j.at("steps")[0].at("observed") == 0.5);

  std::ostringstream csv;
  bound_report_to_csv(report, csv);
  CHECK(csv.str() ==
        "k,observed,bound,condition_satisfied,holds\n1,0.5,1,1,1\n");
}

TEST_CASE("mismatched experiments track the mismatch norm") {
  ExperimentConfig cfg = config_from_json(tiny_config_json());
  cfg.mismatch = MismatchRankOne{0.3};
  const TrialRun run = run_trial(cfg, 0);
  CHECK(run.traces[0].delta_initial > 0.0);
  CHECK(std::isfinite(run.traces[0].delta_final));
}

TEST_CASE("sample-covariance mismatch approaches the truth") {
  ExperimentConfig cfg = config_from_json(tiny_config_json());
  cfg.mismatch = MismatchSampleCov{20000};
  const TrialRun run = run_trial(cfg, 0);
  CHECK(run.traces[0].delta_initial < 0.3);
}

TEST_SUITE_END();
