#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "lst/kernels.hpp"
#include "lst/tensor.hpp"

namespace lst {

namespace detail {

template <class T>
bool needs_grad(const std::shared_ptr<TensorImpl<T>>& p) {
  return p->requires_grad;
}

template <class T>
void accumulate(const std::shared_ptr<TensorImpl<T>>& p, const T* g, size_t n) {
  if (!needs_grad(p)) return;
  p->ensure_grad();
  T* dst = p->grad.data();
  for (size_t i = 0; i < n; ++i) dst[i] += g[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a.shape(), b.shape(), "add");
  std::vector<T> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
  return Tensor<T>::make_op(a.shape(), std::move(v), {a, b},
                            [](const TensorImpl<T>& self) {
                              detail::accumulate(self.parents[0], self.grad.data(),
                                                 self.grad.size());
                              detail::accumulate(self.parents[1], self.grad.data(),
                                                 self.grad.size());
                            });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a.shape(), b.shape(), "sub");
  std::vector<T> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a[i] - b[i];
  return Tensor<T>::make_op(
      a.shape(), std::move(v), {a, b}, [](const TensorImpl<T>& self) {
        detail::accumulate(self.parents[0], self.grad.data(), self.grad.size());
        const auto& p = self.parents[1];
        if (detail::needs_grad(p)) {
          p->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] -= self.grad[i];
        }
      });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a.shape(), b.shape(), "mul");
  std::vector<T> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a[i] * b[i];
  return Tensor<T>::make_op(
      a.shape(), std::move(v), {a, b}, [](const TensorImpl<T>& self) {
        const auto& pa = self.parents[0];
        const auto& pb = self.parents[1];
        if (detail::needs_grad(pa)) {
          pa->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i)
            pa->grad[i] += self.grad[i] * pb->value[i];
        }
        if (detail::needs_grad(pb)) {
          pb->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i)
            pb->grad[i] += self.grad[i] * pa->value[i];
        }
      });
}

template <class T>
Tensor<T> neg(const Tensor<T>& a) {
  std::vector<T> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = -a[i];
  return Tensor<T>::make_op(a.shape(), std::move(v), {a},
                            [](const TensorImpl<T>& self) {
                              const auto& p = self.parents[0];
                              if (!detail::needs_grad(p)) return;
                              p->ensure_grad();
                              for (size_t i = 0; i < self.grad.size(); ++i)
                                p->grad[i] -= self.grad[i];
                            });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  std::vector<T> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a[i] * s;
  return Tensor<T>::make_op(a.shape(), std::move(v), {a},
                            [s](const TensorImpl<T>& self) {
                              const auto& p = self.parents[0];
                              if (!detail::needs_grad(p)) return;
                              p->ensure_grad();
                              for (size_t i = 0; i < self.grad.size(); ++i)
                                p->grad[i] += s * self.grad[i];
                            });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  std::vector<T> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a[i] + c;
  return Tensor<T>::make_op(a.shape(), std::move(v), {a},
                            [](const TensorImpl<T>& self) {
                              detail::accumulate(self.parents[0], self.grad.data(),
                                                 self.grad.size());
                            });
}

// ---------------------------------------------------------------------------
// Activations and pointwise transcendentals
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a[i] > T(0) ? a[i] : T(0);
  return Tensor<T>::make_op(
      a.shape(), std::move(v), {a}, [](const TensorImpl<T>& self) {
        const auto& p = self.parents[0];
        if (!detail::needs_grad(p)) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
          if (p->value[i] > T(0)) p->grad[i] += self.grad[i];
      });
}

template <class T>
Tensor<T> tanh_(const Tensor<T>& a) {
  std::vector<T> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(a[i]);
  return Tensor<T>::make_op(
      a.shape(), std::move(v), {a}, [](const TensorImpl<T>& self) {
        const auto& p = self.parents[0];
        if (!detail::needs_grad(p)) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
          const T y = self.value[i];
          p->grad[i] += self.grad[i] * (T(1) - y * y);
        }
      });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  std::vector<T> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = T(1) / (T(1) + std::exp(-a[i]));
  return Tensor<T>::make_op(
      a.shape(), std::move(v), {a}, [](const TensorImpl<T>& self) {
        const auto& p = self.parents[0];
        if (!detail::needs_grad(p)) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
          const T y = self.value[i];
          p->grad[i] += self.grad[i] * y * (T(1) - y);
        }
      });
}

enum class Act { kRelu, kTanh, kSigmoid };

template <class T>
Tensor<T> activation(const Tensor<T>& a, Act kind) {
  switch (kind) {
    case Act::kRelu: return relu(a);
    case Act::kTanh: return tanh_(a);
    case Act::kSigmoid: return sigmoid(a);
  }
  throw ParameterError("activation: unknown kind");
}

template <class T>
Tensor<T> exp_(const Tensor<T>& a) {
  std::vector<T> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = std::exp(a[i]);
  return Tensor<T>::make_op(
      a.shape(), std::move(v), {a}, [](const TensorImpl<T>& self) {
        const auto& p = self.parents[0];
        if (!detail::needs_grad(p)) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
          p->grad[i] += self.grad[i] * self.value[i];
      });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> v(static_cast<size_t>(m) * n);
  kernels::gemm_nn(v.data(), a.data().data(), b.data().data(), m, k, n, false);
  return Tensor<T>::make_op(
      {m, n}, std::move(v), {a, b}, [m, k, n](const TensorImpl<T>& self) {
        const auto& pa = self.parents[0];
        const auto& pb = self.parents[1];
        if (detail::needs_grad(pa)) {
          pa->ensure_grad();
          // a.grad += g * b^T
          kernels::gemm_nt_acc(pa->grad.data(), self.grad.data(), pb->value.data(), m,
                               n, k);
        }
        if (detail::needs_grad(pb)) {
          pb->ensure_grad();
          // b.grad += a^T * g
          kernels::gemm_tn_acc(pb->grad.data(), pa->value.data(), self.grad.data(), m,
                               k, n);
        }
      });
}

// x[N,K] + b[K] broadcast over rows.
template <class T>
Tensor<T> add_rowwise(const Tensor<T>& x, const Tensor<T>& b) {
  if (x.ndim() != 2 || b.ndim() != 1 || x.dim(1) != b.dim(0)) {
    throw DimensionError("add_rowwise: shapes " + shape_str(x.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const int n = x.dim(0), k = x.dim(1);
  std::vector<T> v(x.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j)
      v[static_cast<size_t>(i) * k + j] = x[static_cast<size_t>(i) * k + j] + b[j];
  return Tensor<T>::make_op(
      x.shape(), std::move(v), {x, b}, [n, k](const TensorImpl<T>& self) {
        detail::accumulate(self.parents[0], self.grad.data(), self.grad.size());
        const auto& pb = self.parents[1];
        if (detail::needs_grad(pb)) {
          pb->ensure_grad();
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < k; ++j)
              pb->grad[j] += self.grad[static_cast<size_t>(i) * k + j];
        }
      });
}

// x[N,C,H,W] + b[C] broadcast over batch and spatial dims.
template <class T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& b) {
  if (x.ndim() != 4 || b.ndim() != 1 || x.dim(1) != b.dim(0)) {
    throw DimensionError("add_channel_bias: shapes " + shape_str(x.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const int N = x.dim(0), C = x.dim(1);
  const size_t plane = static_cast<size_t>(x.dim(2)) * x.dim(3);
  std::vector<T> v(x.size());
  for (int img = 0; img < N; ++img)
    for (int c = 0; c < C; ++c) {
      const size_t base = (static_cast<size_t>(img) * C + c) * plane;
      for (size_t p = 0; p < plane; ++p) v[base + p] = x[base + p] + b[c];
    }
  return Tensor<T>::make_op(
      x.shape(), std::move(v), {x, b}, [N, C, plane](const TensorImpl<T>& self) {
        detail::accumulate(self.parents[0], self.grad.data(), self.grad.size());
        const auto& pb = self.parents[1];
        if (detail::needs_grad(pb)) {
          pb->ensure_grad();
          for (int img = 0; img < N; ++img)
            for (int c = 0; c < C; ++c) {
              const size_t base = (static_cast<size_t>(img) * C + c) * plane;
              T s = 0;
              for (size_t p = 0; p < plane; ++p) s += self.grad[base + p];
              pb->grad[c] += s;
            }
        }
      });
}

// ---------------------------------------------------------------------------
// Convolutions
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void conv_forward_raw(T* out, const T* in, const T* w, int N, int C, int H, int W,
                      int F, int kh, int kw, int stride, int pad, int OH, int OW) {
  const size_t col_sz = static_cast<size_t>(C) * kh * kw * OH * OW;
  std::vector<T> col(col_sz);
  for (int img = 0; img < N; ++img) {
    kernels::im2col(col.data(), in + static_cast<size_t>(img) * C * H * W, C, H, W, kh,
                    kw, stride, pad, OH, OW);
    kernels::gemm_nn(out + static_cast<size_t>(img) * F * OH * OW, w, col.data(), F,
                     C * kh * kw, OH * OW, false);
  }
}

// gradient w.r.t. conv input: gx += scatter(W^T * gy)
template <class T>
void conv_backward_input_raw(T* gx, const T* gy, const T* w, int N, int C, int H, int W,
                             int F, int kh, int kw, int stride, int pad, int OH,
                             int OW) {
  const size_t col_sz = static_cast<size_t>(C) * kh * kw * OH * OW;
  std::vector<T> col(col_sz);
  for (int img = 0; img < N; ++img) {
    std::fill(col.begin(), col.end(), T(0));
    kernels::gemm_tn_acc(col.data(), w, gy + static_cast<size_t>(img) * F * OH * OW, F,
                         C * kh * kw, OH * OW);
    kernels::col2im_acc(gx + static_cast<size_t>(img) * C * H * W, col.data(), C, H, W,
                        kh, kw, stride, pad, OH, OW);
  }
}

// gradient w.r.t. conv weight: gw += gy * im2col(x)^T
template <class T>
void conv_backward_weight_raw(T* gw, const T* gy, const T* in, int N, int C, int H,
                              int W, int F, int kh, int kw, int stride, int pad, int OH,
                              int OW) {
  const size_t col_sz = static_cast<size_t>(C) * kh * kw * OH * OW;
  std::vector<T> col(col_sz);
  for (int img = 0; img < N; ++img) {
    kernels::im2col(col.data(), in + static_cast<size_t>(img) * C * H * W, C, H, W, kh,
                    kw, stride, pad, OH, OW);
    kernels::gemm_nt_acc(gw, gy + static_cast<size_t>(img) * F * OH * OW, col.data(), F,
                         OH * OW, C * kh * kw);
  }
}

}  // namespace detail

// Cross-correlation (no kernel flip). input [N,C,H,W], weight [F,C,kh,kw].
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, int stride, int pad) {
  if (stride <= 0) throw ParameterError("conv2d: stride must be positive");
  if (pad < 0) throw ParameterError("conv2d: padding must be nonnegative");
  if (input.ndim() != 4 || weight.ndim() != 4 || input.dim(1) != weight.dim(1)) {
    throw DimensionError("conv2d: shapes " + shape_str(input.shape()) + " and " +
                         shape_str(weight.shape()));
  }
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int F = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (kh > H + 2 * pad || kw > W + 2 * pad) {
    throw DimensionError("conv2d: kernel " + shape_str(weight.shape()) +
                         " larger than padded input " + shape_str(input.shape()));
  }
  const int OH = kernels::conv_out_dim(H, kh, stride, pad);
  const int OW = kernels::conv_out_dim(W, kw, stride, pad);
  std::vector<T> v(static_cast<size_t>(N) * F * OH * OW);
  detail::conv_forward_raw(v.data(), input.data().data(), weight.data().data(), N, C, H,
                           W, F, kh, kw, stride, pad, OH, OW);
  return Tensor<T>::make_op(
      {N, F, OH, OW}, std::move(v), {input, weight},
      [=](const TensorImpl<T>& self) {
        const auto& px = self.parents[0];
        const auto& pw = self.parents[1];
        if (detail::needs_grad(px)) {
          px->ensure_grad();
          detail::conv_backward_input_raw(px->grad.data(), self.grad.data(),
                                          pw->value.data(), N, C, H, W, F, kh, kw,
                                          stride, pad, OH, OW);
        }
        if (detail::needs_grad(pw)) {
          pw->ensure_grad();
          detail::conv_backward_weight_raw(pw->grad.data(), self.grad.data(),
                                           px->value.data(), N, C, H, W, F, kh, kw,
                                           stride, pad, OH, OW);
        }
      });
}

// Adjoint of conv2d with respect to its input. input [N,F,H,W], weight
// [F,C,kh,kw], output [N,C,OH,OW] with OH = (H-1)*stride - 2*pad + kh +
// output_pad. output_pad resolves the stride ambiguity when inverting even
// sizes; 0 keeps the plain adjoint.
template <class T>
Tensor<T> conv2d_transpose(const Tensor<T>& input, const Tensor<T>& weight, int stride,
                           int pad, int output_pad = 0) {
  if (stride <= 0) throw ParameterError("conv2d_transpose: stride must be positive");
  if (pad < 0) throw ParameterError("conv2d_transpose: padding must be nonnegative");
  if (output_pad < 0 || output_pad >= stride) {
    throw ParameterError("conv2d_transpose: output_pad must be in [0, stride)");
  }
  if (input.ndim() != 4 || weight.ndim() != 4 || input.dim(1) != weight.dim(0)) {
    throw DimensionError("conv2d_transpose: shapes " + shape_str(input.shape()) +
                         " and " + shape_str(weight.shape()));
  }
  const int N = input.dim(0), F = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int C = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  const int OH = (H - 1) * stride - 2 * pad + kh + output_pad;
  const int OW = (W - 1) * stride - 2 * pad + kw + output_pad;
  if (OH <= 0 || OW <= 0) {
    throw DimensionError("conv2d_transpose: output would be empty for input " +
                         shape_str(input.shape()));
  }
  // Forward is conv_backward_input with the roles of x and gy swapped.
  std::vector<T> v(static_cast<size_t>(N) * C * OH * OW, T(0));
  detail::conv_backward_input_raw(v.data(), input.data().data(), weight.data().data(),
                                  N, C, OH, OW, F, kh, kw, stride, pad, H, W);
  return Tensor<T>::make_op(
      {N, C, OH, OW}, std::move(v), {input, weight},
      [=](const TensorImpl<T>& self) {
        const auto& px = self.parents[0];
        const auto& pw = self.parents[1];
        if (detail::needs_grad(px)) {
          px->ensure_grad();
          detail::conv_forward_raw(px->grad.data(), self.grad.data(), pw->value.data(),
                                   N, C, OH, OW, F, kh, kw, stride, pad, H, W);
        }
        if (detail::needs_grad(pw)) {
          pw->ensure_grad();
          detail::conv_backward_weight_raw(pw->grad.data(), px->value.data(),
                                           self.grad.data(), N, C, OH, OW, F, kh, kw,
                                           stride, pad, H, W);
        }
      });
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

template <class T>
struct BatchNormState {
  std::vector<T> running_mean;
  std::vector<T> running_var;

  explicit BatchNormState(int channels = 0)
      : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

// Per-channel normalization for [N,C] or [N,C,H,W]. Training mode uses batch
// statistics (biased variance) and folds them into the running estimates with
// the given momentum; eval mode uses the running estimates.
template <class T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, bool training, T eps = T(1e-5),
                     T momentum = T(0.1)) {
  if (x.ndim() != 2 && x.ndim() != 4) {
    throw DimensionError("batch_norm: input must be [N,C] or [N,C,H,W], got " +
                         shape_str(x.shape()));
  }
  const int N = x.dim(0), C = x.dim(1);
  const int spatial = x.ndim() == 4 ? x.dim(2) * x.dim(3) : 1;
  if (gamma.ndim() != 1 || gamma.dim(0) != C || beta.ndim() != 1 || beta.dim(0) != C) {
    throw DimensionError("batch_norm: scale/shift must be [C]=" + std::to_string(C) +
                         ", got " + shape_str(gamma.shape()) + " and " +
                         shape_str(beta.shape()));
  }
  if (static_cast<int>(state.running_mean.size()) != C) {
    throw DimensionError("batch_norm: running stats sized " +
                         std::to_string(state.running_mean.size()) + ", want " +
                         std::to_string(C));
  }
  if (training && N < 2) {
    throw ContractError("batch_norm: degenerate batch of " + std::to_string(N) +
                        " in training mode");
  }

  const size_t m = static_cast<size_t>(N) * spatial;  // reduction count per channel
  std::vector<T> mean(C), inv_std(C);
  if (training) {
    for (int c = 0; c < C; ++c) {
      T s = 0;
      for (int img = 0; img < N; ++img) {
        const size_t base = (static_cast<size_t>(img) * C + c) * spatial;
        for (int p = 0; p < spatial; ++p) s += x[base + p];
      }
      mean[c] = s / static_cast<T>(m);
    }
    for (int c = 0; c < C; ++c) {
      T s = 0;
      for (int img = 0; img < N; ++img) {
        const size_t base = (static_cast<size_t>(img) * C + c) * spatial;
        for (int p = 0; p < spatial; ++p) {
          const T d = x[base + p] - mean[c];
          s += d * d;
        }
      }
      const T var = s / static_cast<T>(m);
      inv_std[c] = T(1) / std::sqrt(var + eps);
      state.running_mean[c] = (T(1) - momentum) * state.running_mean[c] + momentum * mean[c];
      state.running_var[c] = (T(1) - momentum) * state.running_var[c] + momentum * var;
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[c] = state.running_mean[c];
      inv_std[c] = T(1) / std::sqrt(state.running_var[c] + eps);
    }
  }

  std::vector<T> xhat(x.size());
  std::vector<T> v(x.size());
  for (int img = 0; img < N; ++img)
    for (int c = 0; c < C; ++c) {
      const size_t base = (static_cast<size_t>(img) * C + c) * spatial;
      for (int p = 0; p < spatial; ++p) {
        const T h = (x[base + p] - mean[c]) * inv_std[c];
        xhat[base + p] = h;
        v[base + p] = gamma[c] * h + beta[c];
      }
    }

  return Tensor<T>::make_op(
      x.shape(), std::move(v), {x, gamma, beta},
      [N, C, spatial, m, training, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](const TensorImpl<T>& self) {
        const auto& px = self.parents[0];
        const auto& pg = self.parents[1];
        const auto& pb = self.parents[2];
        std::vector<T> sum_g(C, T(0)), sum_gx(C, T(0));
        for (int img = 0; img < N; ++img)
          for (int c = 0; c < C; ++c) {
            const size_t base = (static_cast<size_t>(img) * C + c) * spatial;
            for (int p = 0; p < spatial; ++p) {
              sum_g[c] += self.grad[base + p];
              sum_gx[c] += self.grad[base + p] * xhat[base + p];
            }
          }
        if (detail::needs_grad(pg)) {
          pg->ensure_grad();
          for (int c = 0; c < C; ++c) pg->grad[c] += sum_gx[c];
        }
        if (detail::needs_grad(pb)) {
          pb->ensure_grad();
          for (int c = 0; c < C; ++c) pb->grad[c] += sum_g[c];
        }
        if (detail::needs_grad(px)) {
          px->ensure_grad();
          const T inv_m = T(1) / static_cast<T>(m);
          for (int img = 0; img < N; ++img)
            for (int c = 0; c < C; ++c) {
              const size_t base = (static_cast<size_t>(img) * C + c) * spatial;
              const T g = pg->value[c] * inv_std[c];
              for (int p = 0; p < spatial; ++p) {
                if (training) {
                  px->grad[base + p] +=
                      g * (self.grad[base + p] - sum_g[c] * inv_m -
                           xhat[base + p] * sum_gx[c] * inv_m);
                } else {
                  px->grad[base + p] += g * self.grad[base + p];
                }
              }
            }
        }
      });
}

// ---------------------------------------------------------------------------
// Data movement
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
  if (numel(new_shape) != static_cast<int64_t>(x.size())) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(new_shape));
  }
  std::vector<T> v(x.data().begin(), x.data().end());
  return Tensor<T>::make_op(std::move(new_shape), std::move(v), {x},
                            [](const TensorImpl<T>& self) {
                              detail::accumulate(self.parents[0], self.grad.data(),
                                                 self.grad.size());
                            });
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& inputs, int axis) {
  if (inputs.empty()) throw ContractError("concat: no inputs");
  const Shape& s0 = inputs[0].shape();
  if (axis < 0 || axis >= static_cast<int>(s0.size())) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(s0));
  }
  int axis_total = 0;
  for (const auto& t : inputs) {
    const Shape& s = t.shape();
    if (s.size() != s0.size()) {
      throw DimensionError("concat: rank mismatch " + shape_str(s0) + " vs " +
                           shape_str(s));
    }
    for (size_t d = 0; d < s.size(); ++d) {
      if (static_cast<int>(d) != axis && s[d] != s0[d]) {
        throw DimensionError("concat: off-axis mismatch " + shape_str(s0) + " vs " +
                             shape_str(s));
      }
    }
    axis_total += s[static_cast<size_t>(axis)];
  }
  Shape out_shape = s0;
  out_shape[static_cast<size_t>(axis)] = axis_total;

  size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<size_t>(s0[d]);
  for (size_t d = static_cast<size_t>(axis) + 1; d < s0.size(); ++d)
    inner *= static_cast<size_t>(s0[d]);

  std::vector<T> v(static_cast<size_t>(numel(out_shape)));
  std::vector<size_t> piece(inputs.size());
  {
    size_t off = 0;
    for (size_t t = 0; t < inputs.size(); ++t) {
      piece[t] = static_cast<size_t>(inputs[t].shape()[static_cast<size_t>(axis)]) * inner;
      const auto src = inputs[t].data();
      for (size_t o = 0; o < outer; ++o) {
        std::memcpy(v.data() + o * static_cast<size_t>(axis_total) * inner + off,
                    src.data() + o * piece[t], piece[t] * sizeof(T));
      }
      off += piece[t];
    }
  }
  return Tensor<T>::make_op(
      std::move(out_shape), std::move(v), inputs,
      [outer, inner, axis_total, piece](const TensorImpl<T>& self) {
        size_t off = 0;
        for (size_t t = 0; t < self.parents.size(); ++t) {
          const auto& p = self.parents[t];
          if (detail::needs_grad(p)) {
            p->ensure_grad();
            for (size_t o = 0; o < outer; ++o) {
              const T* src =
                  self.grad.data() + o * static_cast<size_t>(axis_total) * inner + off;
              T* dst = p->grad.data() + o * piece[t];
              for (size_t i = 0; i < piece[t]; ++i) dst[i] += src[i];
            }
          }
          off += piece[t];
        }
      });
}

template <class T>
std::vector<Tensor<T>> split(const Tensor<T>& x, int axis, int parts) {
  const Shape& s = x.shape();
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw DimensionError("split: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(s));
  }
  const int extent = s[static_cast<size_t>(axis)];
  if (parts <= 0 || extent % parts != 0) {
    throw DimensionError("split: axis extent " + std::to_string(extent) +
                         " not divisible into " + std::to_string(parts) + " parts");
  }
  const int piece_extent = extent / parts;
  size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<size_t>(s[d]);
  for (size_t d = static_cast<size_t>(axis) + 1; d < s.size(); ++d)
    inner *= static_cast<size_t>(s[d]);
  const size_t piece = static_cast<size_t>(piece_extent) * inner;
  const size_t stride = static_cast<size_t>(extent) * inner;

  Shape piece_shape = s;
  piece_shape[static_cast<size_t>(axis)] = piece_extent;
  std::vector<Tensor<T>> outs;
  outs.reserve(static_cast<size_t>(parts));
  for (int t = 0; t < parts; ++t) {
    std::vector<T> v(outer * piece);
    const size_t off = static_cast<size_t>(t) * piece;
    for (size_t o = 0; o < outer; ++o)
      std::memcpy(v.data() + o * piece, x.data().data() + o * stride + off,
                  piece * sizeof(T));
    outs.push_back(Tensor<T>::make_op(
        piece_shape, std::move(v), {x},
        [outer, piece, stride, off](const TensorImpl<T>& self) {
          const auto& p = self.parents[0];
          if (!detail::needs_grad(p)) return;
          p->ensure_grad();
          for (size_t o = 0; o < outer; ++o) {
            T* dst = p->grad.data() + o * stride + off;
            const T* src = self.grad.data() + o * piece;
            for (size_t i = 0; i < piece; ++i) dst[i] += src[i];
          }
        }));
  }
  return outs;
}

// Cuts the graph: value copy with no recorded parents.
template <class T>
Tensor<T> detach(const Tensor<T>& x) {
  return Tensor<T>::from(x.shape(), std::vector<T>(x.data().begin(), x.data().end()));
}

// ---------------------------------------------------------------------------
// Reductions and losses
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = 0;
  for (size_t i = 0; i < x.size(); ++i) s += x[i];
  return Tensor<T>::make_op({1}, {s}, {x}, [](const TensorImpl<T>& self) {
    const auto& p = self.parents[0];
    if (!detail::needs_grad(p)) return;
    p->ensure_grad();
    const T g = self.grad[0];
    for (auto& gi : p->grad) gi += g;
  });
}

// Batched squared-error: (1/N) * sum_i ||a_i - b_i||^2 where N is the size of
// the leading (batch) dimension. Per-sample element counts are NOT divided
// out; callers wanting per-pixel averages rescale explicitly.
template <class T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a.shape(), b.shape(), "mse");
  const int batch = a.shape().empty() ? 1 : a.dim(0);
  T s = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const T d = a[i] - b[i];
    s += d * d;
  }
  s /= static_cast<T>(batch);
  return Tensor<T>::make_op(
      {1}, {s}, {a, b}, [batch](const TensorImpl<T>& self) {
        const auto& pa = self.parents[0];
        const auto& pb = self.parents[1];
        const T c = T(2) * self.grad[0] / static_cast<T>(batch);
        if (detail::needs_grad(pa)) {
          pa->ensure_grad();
          for (size_t i = 0; i < pa->value.size(); ++i)
            pa->grad[i] += c * (pa->value[i] - pb->value[i]);
        }
        if (detail::needs_grad(pb)) {
          pb->ensure_grad();
          for (size_t i = 0; i < pb->value.size(); ++i)
            pb->grad[i] -= c * (pa->value[i] - pb->value[i]);
        }
      });
}

}  // namespace lst
