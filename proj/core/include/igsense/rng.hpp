#pragma once

#include <cstdint>
#include <string_view>

#include <Eigen/Dense>

namespace igsense {

/// Deterministic random source with splittable child streams. Child streams
/// are derived from the parent's seed and a stream label alone, so they do
/// not depend on how many draws the parent has made. Normal variates come
/// from Box-Muller over 53-bit uniforms, which keeps the byte-level output
/// identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Child stream keyed by an integer (e.g. a trial index).
  Rng child(std::uint64_t stream) const;
  /// Child stream keyed by a label and an integer, e.g. ("noise", trial).
  Rng child(std::string_view label, std::uint64_t stream = 0) const;

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of precision.
  double uniform01();
  /// Uniform on (0, 1], never exactly zero (safe under log).
  double uniform01_open();
  double normal();
  Eigen::VectorXd normal_vector(int n);

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t state_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace igsense
