#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace lst::selfcheck {

struct CheckResult {
  std::string name;
  double worst_error = 0.0;  // relative for gradients, absolute for oracles
  std::string worst_tensor;
  double tolerance = 0.0;
  bool passed = false;
};

struct Options {
  double gradient_tolerance = 1e-4;
  double oracle_tolerance = 1e-12;
  std::uint64_t seed = 20240611;
  /// Name of a check whose analytic gradient is sign-flipped before the
  /// comparison (harness sensitivity test). Empty for none.
  std::string inject_fault;
};

/// Gradient checks on a small instance (N=16, S=4, D1=4, 3 classes) plus
/// oracle equivalences, all in double precision.
std::vector<CheckResult> run(const Options& options = {});

/// Names of every check `run` performs, in order.
std::vector<std::string> check_names();

bool all_passed(const std::vector<CheckResult>& results);
void print_report(std::ostream& os, const std::vector<CheckResult>& results);

}  // namespace lst::selfcheck
