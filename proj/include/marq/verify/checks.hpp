#pragma once

#include <string>

namespace marq::verify {

/// Outcome of one acceptance check.
struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

inline constexpr int kNumChecks = 10;

/// Checks 6 and 7 train agents and take minutes; the rest take seconds.
bool is_learning_check(int id);

/// Wall-clock budget of a check in seconds, 0 when unbounded. A check that
/// overruns its budget fails.
double time_limit_seconds(int id);

/// Runs check `id` in [1, kNumChecks]. Never throws: an exception inside a
/// check is reported as a failure with its message.
CheckResult run_check(int id);

/// "criterion <id> PASS|FAIL <name> (<seconds>s): <detail>"
std::string format_result(const CheckResult& result);

}  // namespace marq::verify
