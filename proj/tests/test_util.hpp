#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "onetracker/rng.hpp"
#include "onetracker/tensor.hpp"

namespace ot_test {

using onetracker::Rng;
using onetracker::Shape;
using onetracker::Tensor;

inline Tensor rand_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<size_t>(onetracker::shape_numel(shape)));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(shape, std::move(v));
}

// Values with |x| in [margin, 1]; keeps kinked ops (relu, abs, max) away from
// their non-differentiable points during finite-difference checks.
inline Tensor rand_away_from_zero(const Shape& shape, Rng& rng, double margin = 0.2) {
  std::vector<double> v(static_cast<size_t>(onetracker::shape_numel(shape)));
  for (double& x : v) {
    const double mag = rng.uniform(margin, 1.0);
    x = rng.uniform() < 0.5 ? -mag : mag;
  }
  return Tensor(shape, std::move(v));
}

inline bool bits_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data().data(), b.data().data(), a.data().size() * sizeof(double)) == 0;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  auto da = a.data(), db = b.data();
  for (size_t i = 0; i < da.size(); ++i) m = std::max(m, std::fabs(da[i] - db[i]));
  return m;
}

}  // namespace ot_test
