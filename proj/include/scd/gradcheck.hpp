#pragma once

#include <string>
#include <vector>

namespace scd {

struct GradCheckResult {
  std::string op;
  double worst_rel_err = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

// Central finite-difference sweep over every differentiable operation,
// several seeds each. Relative error is
//   |analytic - fd| / (|fd| + 1e-8)
// with fd the central difference at step h. Kinked ops (maxpool, the
// margin loss) are probed at non-degenerate points only.
std::vector<GradCheckResult> run_gradient_checks(int seeds_per_op = 5,
                                                 double h = 1e-5,
                                                 double tolerance = 1e-4);

bool all_passed(const std::vector<GradCheckResult>& results);

}  // namespace scd
