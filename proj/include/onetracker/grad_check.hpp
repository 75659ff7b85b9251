#pragma once

#include <functional>
#include <string>
#include <vector>

#include "onetracker/tensor.hpp"

namespace onetracker {

/// Result of comparing analytic gradients against central finite differences.
struct GradCheckReport {
  bool ok = true;
  double max_rel_err = 0.0;
  int64_t worst_coord = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::string summary() const;
};

/// Checks d f(x) / d x against central differences.
///
/// `f` must build a fresh graph from `x` and return a scalar tensor.  The
/// relative error at coordinate i is |a_i - n_i| / max(1, |n_i|).  When
/// `max_coords` >= 0 only the first `max_coords` coordinates are perturbed
/// (keeps large-tensor checks affordable); -1 checks every coordinate.
GradCheckReport finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                  double step = 1e-5, double rel_tol = 1e-4,
                                  int64_t max_coords = -1);

}  // namespace onetracker
