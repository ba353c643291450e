#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace uhdn {

struct GradCheckResult {
  std::string op;
  int trials = 0;
  double worst_rel = 0.0;    // max relative error over all inputs/elements
  std::string worst_where;   // trial/input/element of the worst error
  bool pass = false;         // worst_rel < 1e-4
};

// Operations the harness knows how to exercise.
std::vector<std::string> gradcheck_op_names();

// Compare reverse-mode gradients against central finite differences
// (64-bit, eps 1e-5) on `trials` random small instances of one operation.
GradCheckResult gradcheck_op(const std::string& op, int trials,
                             std::uint64_t seed);

std::vector<GradCheckResult> gradcheck_all(int trials, std::uint64_t seed);

std::string gradcheck_report(const std::vector<GradCheckResult>& results);

}  // namespace uhdn
