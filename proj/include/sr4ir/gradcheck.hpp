#pragma once

#include <string>
#include <vector>

namespace sr4ir {

struct GradCheckResult {
  std::string op;
  double max_rel_err = 0.0;
  bool pass = false;
};

// Central finite differences against the tape, 64-bit mode, h = 1e-5,
// randomized small shapes. Covers every differentiable op and the composite
// forwards (SR net, extractor, heads, losses).
std::vector<GradCheckResult> run_gradcheck(int num_seeds = 5, double tol = 1e-4);

}  // namespace sr4ir
