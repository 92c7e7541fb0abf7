#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "lst/tensor.hpp"

namespace lsttest {

// Central finite-difference gradient oracle. Runs the function once with the
// tape to collect analytic gradients, then perturbs every element of every
// input by +-h with recording disabled and compares. The quotient arithmetic
// stays in the tensor's scalar type; callers instantiate with double when the
// check needs 64-bit headroom. Relative error is guarded below magnitude 1.
template <class T, class F>
double max_grad_error(F f, std::vector<lst::Tensor<T>>& inputs, double h = 1e-3) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  auto loss = f(inputs);
  lst::backward(loss);

  double worst = 0.0;
  for (auto& t : inputs) {
    auto vals = t.mutable_data();
    auto grads = t.grad();
    for (size_t i = 0; i < vals.size(); ++i) {
      const T saved = vals[i];
      double fp, fm;
      {
        lst::NoGradGuard ng;
        vals[i] = saved + static_cast<T>(h);
        fp = static_cast<double>(f(inputs).item());
        vals[i] = saved - static_cast<T>(h);
        fm = static_cast<double>(f(inputs).item());
        vals[i] = saved;
      }
      const double fd = (fp - fm) / (2.0 * h);
      const double an = grads.empty() ? 0.0 : static_cast<double>(grads[i]);
      const double denom = std::max({1.0, std::abs(fd), std::abs(an)});
      worst = std::max(worst, std::abs(an - fd) / denom);
    }
  }
  return worst;
}

template <class T>
double max_abs_diff(const lst::Tensor<T>& a, const lst::Tensor<T>& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return worst;
}

template <class T>
bool all_finite(const lst::Tensor<T>& a) {
  for (size_t i = 0; i < a.size(); ++i)
    if (!std::isfinite(static_cast<double>(a[i]))) return false;
  return true;
}

}  // namespace lsttest
