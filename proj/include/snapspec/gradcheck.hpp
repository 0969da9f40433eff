#pragma once

#include <functional>
#include <vector>

#include "snapspec/tensor.hpp"

namespace snapspec {

// Relative error used by all gradient checks: |a - n| / max(|a|, |n|, 1e-8).
double relative_error(double analytic, double numeric);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares reverse-mode gradients of a scalar `loss` with respect to every
// tensor in `inputs` against central differences (f(x+h) - f(x-h)) / 2h, with
// h = epsilon * max(1, |x_i|). The inputs are perturbed in place and restored.
// Throws NumericError when `loss` is not reproducible between two evaluations.
GradCheckResult grad_check(const std::function<TensorD()>& loss, std::vector<TensorD> inputs,
                           double epsilon = 1e-5);

// Single-input form: f is evaluated on a leaf copy of x.
double grad_check(const std::function<TensorD(const TensorD&)>& f, const TensorD& x,
                  double epsilon = 1e-5);

}  // namespace snapspec
