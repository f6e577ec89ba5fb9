#ifndef BNC_SUITES_HPP
#define BNC_SUITES_HPP

#include <string>
#include <vector>

namespace bnc::harness {

struct SuiteRow {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct SuiteResult {
  std::string suite;
  std::vector<SuiteRow> rows;
  bool all_pass = false;
  double max_error = 0.0;  // suite-specific: relative or absolute
};

std::vector<std::string> oracle_suite_names();

/// Runs one named oracle suite: "dp-exactness" (forward/Viterbi vs exhaustive
/// enumeration), "quadrature" (closed forms vs numeric integration),
/// "degenerate-limits" (neutral-parameter reductions), "consistency-pairs"
/// (cross-technique equalities). Throws ValidationError on unknown names.
SuiteResult run_oracle_suite(const std::string& name);

}  // namespace bnc::harness

#endif  // BNC_SUITES_HPP
