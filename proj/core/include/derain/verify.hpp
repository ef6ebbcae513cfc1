#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace derain {

// Environment for checks that shell out or write scratch files. cli_path may
// be empty; checks that need the executable then fail with a message saying
// so instead of crashing.
struct CheckContext {
  std::string cli_path;
  std::string work_dir = "verify_work";
};

struct CheckResult {
  bool pass = false;
  std::string detail;
};

struct Check {
  std::string id;
  std::string title;
  bool fast = true;  // fast checks run in the everyday verify command
  std::function<CheckResult(const CheckContext&)> fn;
};

// The release gate, in a fixed order. Each entry prints one pass/fail line.
const std::vector<Check>& acceptance_checks();

// Runs checks matching `only` (empty = all, fast_only filters further).
// Prints "[PASS] id: detail" lines to os; returns the number of failures.
int run_checks(const CheckContext& ctx, const std::vector<std::string>& only, bool fast_only,
               std::ostream& os);

}  // namespace derain
