#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace igsense {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Argument violates a precondition (non-finite entries, out-of-range scalars).
struct InvalidInput : Error {
  using Error::Error;
};

/// A matrix required to be positive semi-definite has a significantly
/// negative eigenvalue.
struct NotPSD : Error {
  using Error::Error;
};

/// The current belief covariance has no positive eigenvalue left to measure.
struct NothingToMeasure : Error {
  using Error::Error;
};

/// Iterative solver hit its iteration cap before meeting its tolerances.
/// Carries the best iterate found so far together with its residuals.
struct NotConverged : Error {
  NotConverged(const std::string& msg, Eigen::MatrixXd best_iterate,
               double l1_residual, double psd_residual, int iterations)
      : Error(msg),
        best(std::move(best_iterate)),
        l1_residual(l1_residual),
        psd_residual(psd_residual),
        iterations(iterations) {}

  Eigen::MatrixXd best;
  double l1_residual;
  double psd_residual;
  int iterations;
};

/// Experiment configuration failed validation; `field` is the JSON path.
struct ConfigError : Error {
  ConfigError(const std::string& field, const std::string& msg)
      : Error(field + ": " + msg), field(field) {}
  std::string field;
};

struct IOError : Error {
  using Error::Error;
};

}  // namespace igsense
