#include "snapspec/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "snapspec/errors.hpp"

namespace snapspec {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(const std::function<TensorD()>& loss, std::vector<TensorD> inputs,
                           double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("grad_check: epsilon must be positive");
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  const TensorD value = loss();
  if (value.numel() != 1) throw ShapeError("grad_check: loss must be scalar");
  value.backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (const auto& t : inputs) analytic.push_back(t.grad());

  NoGradGuard no_grad;
  const double base = value.item();
  const double again = loss().item();
  if (base != again) {
    throw NumericError("grad_check: loss is not deterministic (" + std::to_string(base) + " vs " +
                       std::to_string(again) + ")");
  }

  GradCheckResult result;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto values = inputs[t].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      const double h = epsilon * std::max(1.0, std::abs(orig));
      values[i] = orig + h;
      const double plus = loss().item();
      values[i] = orig - h;
      const double minus = loss().item();
      values[i] = orig;
      const double numeric = (plus - minus) / (2.0 * h);
      const double err = relative_error(analytic[t][i], numeric);
      if (err > result.max_rel_error) {
        result = {err, t, i, analytic[t][i], numeric};
      }
    }
  }
  return result;
}

double grad_check(const std::function<TensorD(const TensorD&)>& f, const TensorD& x,
                  double epsilon) {
  TensorD leaf(x.shape(), std::vector<double>(x.data().begin(), x.data().end()), true);
  return grad_check([&] { return f(leaf); }, {leaf}, epsilon).max_rel_error;
}

}  // namespace snapspec
