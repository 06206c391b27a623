#pragma once

// Test-only reference implementations. Nothing here calls into the code
// paths it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "slv/geometry.h"

namespace slv::testing {

// IoU by counting pixels under the half-open convention.
inline double pixel_iou(const Box& a, const Box& b) {
  const int x_lo = std::min(a.x0, b.x0), x_hi = std::max(a.x1, b.x1);
  const int y_lo = std::min(a.y0, b.y0), y_hi = std::max(a.y1, b.y1);
  long inter = 0, uni = 0;
  for (int i = y_lo; i < y_hi; ++i) {
    for (int j = x_lo; j < x_hi; ++j) {
      const bool in_a = a.y0 <= i && i < a.y1 && a.x0 <= j && j < a.x1;
      const bool in_b = b.y0 <= i && i < b.y1 && b.x0 <= j && j < b.x1;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Central differences of f at x, one coordinate at a time.
inline std::vector<double> central_differences(
    const std::function<double(std::span<const double>)>& f, std::vector<double> x,
    double step = 1e-5) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = f(x);
    x[i] = saved - step;
    const double down = f(x);
    x[i] = saved;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

// ||a - b|| / (||a|| + ||b||), with both norms tiny treated as agreement.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  diff = std::sqrt(diff);
  const double denom = std::sqrt(na) + std::sqrt(nb);
  if (denom < 1e-12) return diff;
  return diff / denom;
}

inline Box random_box(std::mt19937& rng, int height, int width) {
  std::uniform_int_distribution<int> xs(0, width - 1), ys(0, height - 1);
  int x0 = xs(rng), x1 = xs(rng), y0 = ys(rng), y1 = ys(rng);
  if (x0 > x1) std::swap(x0, x1);
  if (y0 > y1) std::swap(y0, y1);
  return Box{x0, y0, x1 + 1, y1 + 1};
}

}  // namespace slv::testing
