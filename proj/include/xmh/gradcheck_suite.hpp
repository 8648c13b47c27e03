#pragma once

// Finite-difference verification of every differentiable op and of the
// composed training objective (threshold replaced by the identity hook).

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace xmh {

struct GradcheckSuiteOptions {
  std::uint64_t seed = 1;
  double tol = 1e-4;
  std::size_t instances = 20;
  double step = 1e-5;
  /// Flip the sign of tanh backward for the duration of the run.
  bool inject_tanh_sign_fault = false;
};

struct GradcheckEntry {
  std::string name;
  std::size_t instances = 0;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradcheckSuiteReport {
  std::vector<GradcheckEntry> entries;
  double tol = 0.0;
  double seconds = 0.0;

  bool passed() const;
};

GradcheckSuiteReport run_gradcheck_suite(const GradcheckSuiteOptions& options = {});

/// One `name<TAB>instances<TAB>max_rel_err<TAB>PASS|FAIL` line per entry.
std::string format_gradcheck_report(const GradcheckSuiteReport& report);

}  // namespace xmh
