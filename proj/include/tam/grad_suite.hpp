#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tam {

// Finite-difference verification of every differentiable primitive (tol
// 1e-4, 10 random points each) and of the full model loss on a 2-frame
// micro-batch (tol 1e-3), all in 64-bit mode.
struct GradSuiteResult {
  bool ok = true;
  std::vector<std::string> lines;  // one "name: max_rel=... pass|FAIL" per check
  double seconds = 0;
};

GradSuiteResult run_grad_suite(bool include_model_check = true, std::uint64_t seed = 12345);

}  // namespace tam
