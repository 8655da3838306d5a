#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "grad/error.hpp"

namespace grad {

/// Central-difference gradient check. Returns the largest componentwise
/// |analytic - numeric| / max(1, |numeric|).
inline double finite_diff_check(const std::function<double(std::span<const double>)>& f,
                                std::span<const double> x, std::span<const double> analytic, double h = 1e-5) {
  if (x.size() != analytic.size()) throw ShapeError("finite_diff_check: gradient length mismatch");
  std::vector<double> probe(x.begin(), x.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double up = f(probe);
    probe[i] = saved - h;
    const double down = f(probe);
    probe[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("finite_diff_check: non-finite function value at component " + std::to_string(i));
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
  }
  return worst;
}

}  // namespace grad
