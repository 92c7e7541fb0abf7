#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lst/tensor.hpp"

namespace lst {

template <class T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

// Bias-corrected ADAM. One state object per parameter set; moment buffers are
// laid out in the same order as the parameters it was built from.
template <class T>
struct AdamState {
  T learning_rate = T(1e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T epsilon = T(1e-8);
  int64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  AdamState() = default;
  AdamState(const std::vector<NamedParam<T>>& params, T lr) : learning_rate(lr) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (const auto& p : params) {
      m.emplace_back(p.tensor.size(), T(0));
      v.emplace_back(p.tensor.size(), T(0));
    }
  }
};

// One update over all parameters from their accumulated grads. Parameters
// without a populated grad this step are treated as zero-gradient (moments
// still decay). Grads are consumed: cleared after the update.
template <class T>
void adam_step(std::vector<NamedParam<T>>& params, AdamState<T>& state) {
  if (params.size() != state.m.size()) {
    throw ParameterError("adam_step: optimizer state tracks " +
                         std::to_string(state.m.size()) + " params, got " +
                         std::to_string(params.size()));
  }
  state.step += 1;
  const T bc1 = T(1) - std::pow(state.beta1, static_cast<T>(state.step));
  const T bc2 = T(1) - std::pow(state.beta2, static_cast<T>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.tensor.size()) {
      throw ParameterError("adam_step: moment buffer for '" + p.name + "' sized " +
                           std::to_string(m.size()) + ", param has " +
                           std::to_string(p.tensor.size()));
    }
    auto w = p.tensor.mutable_data();
    auto g = p.tensor.grad();
    for (size_t j = 0; j < m.size(); ++j) {
      const T gj = g.empty() ? T(0) : g[j];
      m[j] = state.beta1 * m[j] + (T(1) - state.beta1) * gj;
      v[j] = state.beta2 * v[j] + (T(1) - state.beta2) * gj * gj;
      const T mhat = m[j] / bc1;
      const T vhat = v[j] / bc2;
      w[j] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
    p.tensor.zero_grad();
  }
}

}  // namespace lst
