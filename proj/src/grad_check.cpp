#include "onetracker/grad_check.hpp"

#include <cmath>
#include <sstream>

namespace onetracker {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (ok ? "ok" : "FAIL") << " max_rel_err=" << max_rel_err;
  if (worst_coord >= 0) {
    os << " at coord " << worst_coord << " (analytic=" << analytic_at_worst
       << ", numeric=" << numeric_at_worst << ")";
  }
  return os.str();
}

GradCheckReport finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                  double step, double rel_tol, int64_t max_coords) {
  Tensor probe = x.detached_copy();
  probe.set_requires_grad(true);
  Tensor loss = f(probe);
  if (loss.numel() != 1) {
    throw ValidationError("finite_diff_check: objective must be scalar, got " +
                          shape_str(loss.shape()));
  }
  backward(loss);
  if (!probe.has_grad()) {
    throw ValidationError("finite_diff_check: objective did not reach the input");
  }
  std::vector<double> analytic(probe.grad().begin(), probe.grad().end());

  const int64_t n = max_coords < 0 ? x.numel() : std::min<int64_t>(max_coords, x.numel());
  GradCheckReport report;
  Tensor work = x.detached_copy();
  auto vals = work.data_mut();
  for (int64_t i = 0; i < n; ++i) {
    const double orig = vals[static_cast<size_t>(i)];
    vals[static_cast<size_t>(i)] = orig + step;
    const double hi = f(work).item();
    vals[static_cast<size_t>(i)] = orig - step;
    const double lo = f(work).item();
    vals[static_cast<size_t>(i)] = orig;
    const double numeric = (hi - lo) / (2.0 * step);
    const double rel = std::fabs(analytic[static_cast<size_t>(i)] - numeric) /
                       std::max(1.0, std::fabs(numeric));
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_coord = i;
      report.analytic_at_worst = analytic[static_cast<size_t>(i)];
      report.numeric_at_worst = numeric;
    }
  }
  report.ok = report.max_rel_err <= rel_tol;
  return report;
}

}  // namespace onetracker
