#pragma once

#include <cstdint>
#include <vector>

#include "lst/common.hpp"

// Raw dense kernels under the autograd ops. Row-major throughout. The inner
// loops are written in saxpy form (accumulation spread over the output row)
// so the compiler can vectorize them without value-changing flags; every
// output element is produced by a single fixed-order accumulation, keeping
// results bit-reproducible.

namespace lst::kernels {

// C[m,n] = or += A[m,k] * B[k,n]
template <class T>
void gemm_nn(T* c, const T* a, const T* b, int m, int k, int n, bool accumulate) {
  if (!accumulate) std::fill(c, c + static_cast<size_t>(m) * n, T(0));
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<size_t>(i) * k;
    T* crow = c + static_cast<size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      if (av == T(0)) continue;
      const T* brow = b + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[k,n] += A^T[k,m=rows of A] * B[m,n] with A stored [m,k]
template <class T>
void gemm_tn_acc(T* c, const T* a, const T* b, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<size_t>(i) * k;
    const T* brow = b + static_cast<size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      if (av == T(0)) continue;
      T* crow = c + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
void transpose(T* dst, const T* src, int rows, int cols) {
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      dst[static_cast<size_t>(j) * rows + i] = src[static_cast<size_t>(i) * cols + j];
}

// C[m,n] += A[m,k] * B^T with B stored [n,k]; goes through a transpose
// scratch so the hot loop stays in saxpy form.
template <class T>
void gemm_nt_acc(T* c, const T* a, const T* b, int m, int k, int n) {
  std::vector<T> bt(static_cast<size_t>(k) * n);
  transpose(bt.data(), b, n, k);
  gemm_nn(c, a, bt.data(), m, k, n, true);
}

inline int conv_out_dim(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

// input [C,H,W] -> col [C*kh*kw, OH*OW]
template <class T>
void im2col(T* col, const T* input, int C, int H, int W, int kh, int kw, int stride,
            int pad, int OH, int OW) {
  for (int c = 0; c < C; ++c) {
    const T* plane = input + static_cast<size_t>(c) * H * W;
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        T* crow = col + (static_cast<size_t>(c) * kh * kw + i * kw + j) *
                            (static_cast<size_t>(OH) * OW);
        for (int oh = 0; oh < OH; ++oh) {
          const int ih = oh * stride + i - pad;
          if (ih < 0 || ih >= H) {
            std::fill(crow + static_cast<size_t>(oh) * OW,
                      crow + static_cast<size_t>(oh + 1) * OW, T(0));
            continue;
          }
          const T* srow = plane + static_cast<size_t>(ih) * W;
          for (int ow = 0; ow < OW; ++ow) {
            const int iw = ow * stride + j - pad;
            crow[static_cast<size_t>(oh) * OW + ow] =
                (iw >= 0 && iw < W) ? srow[iw] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add col [C*kh*kw, OH*OW] back into image [C,H,W].
template <class T>
void col2im_acc(T* image, const T* col, int C, int H, int W, int kh, int kw, int stride,
                int pad, int OH, int OW) {
  for (int c = 0; c < C; ++c) {
    T* plane = image + static_cast<size_t>(c) * H * W;
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        const T* crow = col + (static_cast<size_t>(c) * kh * kw + i * kw + j) *
                                  (static_cast<size_t>(OH) * OW);
        for (int oh = 0; oh < OH; ++oh) {
          const int ih = oh * stride + i - pad;
          if (ih < 0 || ih >= H) continue;
          T* srow = plane + static_cast<size_t>(ih) * W;
          for (int ow = 0; ow < OW; ++ow) {
            const int iw = ow * stride + j - pad;
            if (iw >= 0 && iw < W) srow[iw] += crow[static_cast<size_t>(oh) * OW + ow];
          }
        }
      }
    }
  }
}

}  // namespace lst::kernels
