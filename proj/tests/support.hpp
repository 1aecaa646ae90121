#pragma once

// Shared test utilities: an independent central-difference harness and
// small random-input generators. Deliberately separate from the library's
// own gradient-check feature so the two act as cross-checks.

#include <cmath>
#include <functional>
#include <vector>

#include "moma/rng.hpp"
#include "moma/tensor.hpp"

namespace testsupport {

inline std::vector<double> random_values(std::size_t n, moma::Rng& rng,
                                         double scale = 1.0) {
  std::vector<double> out(n);
  for (double& v : out) v = scale * rng.gaussian();
  return out;
}

inline moma::Tensor random_matrix(std::size_t rows, std::size_t cols,
                                  moma::Rng& rng, bool requires_grad = false,
                                  double scale = 1.0) {
  return moma::Tensor::from_values({rows, cols},
                                   random_values(rows * cols, rng, scale),
                                   requires_grad);
}

inline std::vector<double> random_unit_row(std::size_t dim, moma::Rng& rng) {
  std::vector<double> v(dim);
  double norm = 0.0;
  for (double& x : v) {
    x = rng.gaussian();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

inline double rel_err(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-6});
  return std::abs(a - b) / denom;
}

// Central finite differences of `loss()` with respect to every element of
// `param`, compared against `analytic`. Returns the max relative error.
inline double fd_max_rel_err(moma::Tensor param,
                             const std::function<double()>& loss,
                             std::span<const double> analytic,
                             double h = 1e-5) {
  double worst = 0.0;
  auto w = param.values_mut();
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double saved = w[i];
    w[i] = saved + h;
    const double plus = loss();
    w[i] = saved - h;
    const double minus = loss();
    w[i] = saved;
    const double fd = (plus - minus) / (2.0 * h);
    worst = std::max(worst, rel_err(analytic[i], fd));
  }
  return worst;
}

}  // namespace testsupport
