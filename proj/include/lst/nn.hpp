#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lst/adam.hpp"
#include "lst/ops.hpp"

namespace lst {

// Fan-in-scaled uniform init, bound = sqrt(1/fan_in). Biases start at zero.
template <class T>
Tensor<T> init_weight(const Shape& shape, int fan_in, Rng& rng) {
  const T bound = static_cast<T>(std::sqrt(1.0 / fan_in));
  auto t = Tensor<T>::randu(shape, rng, -bound, bound);
  t.set_requires_grad(true);
  return t;
}

template <class T>
Tensor<T> init_zeros(const Shape& shape) {
  auto t = Tensor<T>::zeros(shape);
  t.set_requires_grad(true);
  return t;
}

template <class T>
Tensor<T> init_ones(const Shape& shape) {
  auto t = Tensor<T>::ones(shape);
  t.set_requires_grad(true);
  return t;
}

template <class T>
struct Linear {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]

  Linear() = default;
  Linear(int in, int out, Rng& rng, bool zero_init = false)
      : weight(zero_init ? init_zeros<T>({in, out})
                         : init_weight<T>({in, out}, in, rng)),
        bias(init_zeros<T>({out})) {}

  Tensor<T> forward(const Tensor<T>& x) const {
    return add_rowwise(matmul(x, weight), bias);
  }

  int in_dim() const { return weight.dim(0); }
  int out_dim() const { return weight.dim(1); }
  int64_t param_count() const {
    return static_cast<int64_t>(weight.size() + bias.size());
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

template <class T>
struct Conv2d {
  Tensor<T> weight;  // [F, C, kh, kw]
  Tensor<T> bias;    // [F]
  int stride = 1;
  int pad = 0;

  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int kernel, int stride_, int pad_, Rng& rng)
      : weight(init_weight<T>({out_ch, in_ch, kernel, kernel}, in_ch * kernel * kernel,
                              rng)),
        bias(init_zeros<T>({out_ch})),
        stride(stride_),
        pad(pad_) {}

  Tensor<T> forward(const Tensor<T>& x) const {
    return add_channel_bias(conv2d(x, weight, stride, pad), bias);
  }

  int64_t param_count() const {
    return static_cast<int64_t>(weight.size() + bias.size());
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

template <class T>
struct ConvTranspose2d {
  Tensor<T> weight;  // [F(in), C(out), kh, kw]
  Tensor<T> bias;    // [C]
  int stride = 1;
  int pad = 0;
  int output_pad = 0;

  ConvTranspose2d() = default;
  ConvTranspose2d(int in_ch, int out_ch, int kernel, int stride_, int pad_,
                  int output_pad_, Rng& rng)
      : weight(init_weight<T>({in_ch, out_ch, kernel, kernel}, in_ch * kernel * kernel,
                              rng)),
        bias(init_zeros<T>({out_ch})),
        stride(stride_),
        pad(pad_),
        output_pad(output_pad_) {}

  Tensor<T> forward(const Tensor<T>& x) const {
    return add_channel_bias(conv2d_transpose(x, weight, stride, pad, output_pad), bias);
  }

  int64_t param_count() const {
    return static_cast<int64_t>(weight.size() + bias.size());
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

template <class T>
struct BatchNorm {
  Tensor<T> gamma;
  Tensor<T> beta;
  BatchNormState<T> state;

  BatchNorm() = default;
  explicit BatchNorm(int channels)
      : gamma(init_ones<T>({channels})), beta(init_zeros<T>({channels})),
        state(channels) {}

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    return batch_norm(x, gamma, beta, state, training);
  }

  int64_t param_count() const {
    return static_cast<int64_t>(gamma.size() + beta.size());
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
  }

  // Running statistics ride along in checkpoints as non-trained buffers.
  void collect_buffers(const std::string& prefix,
                       std::vector<std::pair<std::string, std::vector<T>*>>& out) {
    out.push_back({prefix + ".running_mean", &state.running_mean});
    out.push_back({prefix + ".running_var", &state.running_var});
  }
};

}  // namespace lst
