#pragma once

#include "bevpaint/tensor.hpp"

namespace bevpaint {

namespace detail {

// Unpacks one sample of an NCHW tensor into a (C*K*K) x (Ho*Wo) column matrix.
// Out-of-image taps are zero.
template <class T>
void im2col(const T* x, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t K,
            std::int64_t stride, std::int64_t pad, std::int64_t Ho, std::int64_t Wo, T* col) {
  const std::int64_t S = Ho * Wo;
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t kh = 0; kh < K; ++kh) {
      for (std::int64_t kw = 0; kw < K; ++kw) {
        T* row = col + ((c * K + kh) * K + kw) * S;
        for (std::int64_t ho = 0; ho < Ho; ++ho) {
          const std::int64_t hi = ho * stride - pad + kh;
          T* dst = row + ho * Wo;
          if (hi < 0 || hi >= H) {
            std::fill(dst, dst + Wo, T(0));
            continue;
          }
          const T* src = x + (c * H + hi) * W;
          for (std::int64_t wo = 0; wo < Wo; ++wo) {
            const std::int64_t wi = wo * stride - pad + kw;
            dst[wo] = (wi >= 0 && wi < W) ? src[wi] : T(0);
          }
        }
      }
    }
  }
}

// Scatter-add of a column matrix back into one sample's gradient image.
template <class T>
void col2im_add(const T* col, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t K,
                std::int64_t stride, std::int64_t pad, std::int64_t Ho, std::int64_t Wo, T* dx) {
  const std::int64_t S = Ho * Wo;
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t kh = 0; kh < K; ++kh) {
      for (std::int64_t kw = 0; kw < K; ++kw) {
        const T* row = col + ((c * K + kh) * K + kw) * S;
        for (std::int64_t ho = 0; ho < Ho; ++ho) {
          const std::int64_t hi = ho * stride - pad + kh;
          if (hi < 0 || hi >= H) continue;
          const T* src = row + ho * Wo;
          T* dst = dx + (c * H + hi) * W;
          for (std::int64_t wo = 0; wo < Wo; ++wo) {
            const std::int64_t wi = wo * stride - pad + kw;
            if (wi >= 0 && wi < W) dst[wi] += src[wo];
          }
        }
      }
    }
  }
}

// C[i, :] += A[i, k] * B[k, :]. The k loop runs in a fixed order per output
// row, so splitting rows across workers cannot change the result.
template <class T>
void gemm_accum(const T* a, const T* b, T* c, std::int64_t M, std::int64_t Kd, std::int64_t N) {
  parallel_for_index(static_cast<std::size_t>(M), [&](std::size_t iu) {
    const auto i = static_cast<std::int64_t>(iu);
    T* crow = c + i * N;
    const T* arow = a + i * Kd;
    for (std::int64_t k = 0; k < Kd; ++k) {
      const T av = arow[k];
      const T* brow = b + k * N;
      for (std::int64_t j = 0; j < N; ++j) crow[j] += av * brow[j];
    }
  });
}

// C[i, j] += dot(A[i, :], B[j, :]) for row-major A (M x N) and B (Kd rows x N).
template <class T>
void gemm_abt_accum(const T* a, const T* b, T* c, std::int64_t M, std::int64_t N, std::int64_t Kd) {
  parallel_for_index(static_cast<std::size_t>(M), [&](std::size_t iu) {
    const auto i = static_cast<std::int64_t>(iu);
    const T* arow = a + i * N;
    T* crow = c + i * Kd;
    for (std::int64_t j = 0; j < Kd; ++j) {
      const T* brow = b + j * N;
      T acc = T(0);
      for (std::int64_t k = 0; k < N; ++k) acc += arow[k] * brow[k];
      crow[j] += acc;
    }
  });
}

}  // namespace detail

// 2-D convolution, NCHW input, OIKK weight, per-output-channel bias. Square
// odd kernels only. Output spatial size floor((dim + 2*pad - K)/stride) + 1.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::int64_t stride,
                 std::int64_t pad) {
  if (x.ndim() != 4) throw ShapeError("conv2d: input must be NCHW, got " + shape_str(x.shape()));
  if (w.ndim() != 4) throw ShapeError("conv2d: weight must be OIKK, got " + shape_str(w.shape()));
  const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t O = w.dim(0), I = w.dim(1), KH = w.dim(2), KW = w.dim(3);
  if (I != C) {
    throw ShapeError("conv2d: input channels " + std::to_string(C) + " do not match weight input channels " +
                     std::to_string(I));
  }
  if (KH != KW || KH % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square with odd size, got " + std::to_string(KH) + "x" +
                     std::to_string(KW));
  }
  if (b.ndim() != 1 || b.dim(0) != O) {
    throw ShapeError("conv2d: bias must have shape [" + std::to_string(O) + "], got " + shape_str(b.shape()));
  }
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1, got " + std::to_string(stride));
  if (pad < 0) throw ShapeError("conv2d: padding must be >= 0, got " + std::to_string(pad));
  const std::int64_t K = KH;
  const std::int64_t Ho = (H + 2 * pad - K) / stride + 1;
  const std::int64_t Wo = (W + 2 * pad - K) / stride + 1;
  if (Ho <= 0 || Wo <= 0) {
    throw ShapeError("conv2d: non-positive output size for input " + shape_str(x.shape()) + " kernel " +
                     std::to_string(K) + " stride " + std::to_string(stride) + " pad " + std::to_string(pad));
  }

  const std::int64_t S = Ho * Wo;
  const std::int64_t CKK = C * K * K;
  auto out = Tensor<T>::zeros({N, O, Ho, Wo}, detail::any_requires_grad<T>({&x, &w, &b}));
  T* po = out.data();
  {
    std::vector<T> col(static_cast<std::size_t>(CKK * S));
    for (std::int64_t n = 0; n < N; ++n) {
      detail::im2col(x.data() + n * C * H * W, C, H, W, K, stride, pad, Ho, Wo, col.data());
      T* y = po + n * O * S;
      for (std::int64_t o = 0; o < O; ++o) std::fill(y + o * S, y + (o + 1) * S, b.data()[o]);
      detail::gemm_accum(w.data(), col.data(), y, O, CKK, S);
    }
  }

  if (out.requires_grad()) {
    auto nx = x.node();
    auto nw = w.node();
    auto nb = b.node();
    out.node()->parents = {nx, nw, nb};
    out.node()->backward_fn = [nx, nw, nb, N, C, H, W, O, K, stride, pad, Ho, Wo, S,
                               CKK](typename Tensor<T>::Node& self) {
      const T* g = self.grad.data();
      if (nb->requires_grad) {
        nb->ensure_grad();
        for (std::int64_t n = 0; n < N; ++n) {
          for (std::int64_t o = 0; o < O; ++o) {
            const T* gr = g + (n * O + o) * S;
            T acc = T(0);
            for (std::int64_t s = 0; s < S; ++s) acc += gr[s];
            nb->grad[static_cast<std::size_t>(o)] += acc;
          }
        }
      }
      const bool need_x = nx->requires_grad;
      const bool need_w = nw->requires_grad;
      if (!need_x && !need_w) return;
      if (need_x) nx->ensure_grad();
      if (need_w) nw->ensure_grad();
      // im2col is recomputed per sample rather than cached from the forward
      // pass; it is cheap next to the GEMMs and keeps graph memory flat.
      std::vector<T> col(static_cast<std::size_t>(CKK * S));
      std::vector<T> dcol;
      if (need_x) dcol.assign(static_cast<std::size_t>(CKK * S), T(0));
      for (std::int64_t n = 0; n < N; ++n) {
        const T* gy = g + n * O * S;
        if (need_w) {
          detail::im2col(nx->data.data() + n * C * H * W, C, H, W, K, stride, pad, Ho, Wo, col.data());
          detail::gemm_abt_accum(gy, col.data(), nw->grad.data(), O, S, CKK);
        }
        if (need_x) {
          std::fill(dcol.begin(), dcol.end(), T(0));
          // dcol = W^T * dY, accumulated over output channels in fixed order.
          parallel_for_index(static_cast<std::size_t>(CKK), [&](std::size_t ku) {
            const auto k = static_cast<std::int64_t>(ku);
            T* drow = dcol.data() + k * S;
            for (std::int64_t o = 0; o < O; ++o) {
              const T wv = nw->data[static_cast<std::size_t>(o * CKK + k)];
              const T* grow = gy + o * S;
              for (std::int64_t s = 0; s < S; ++s) drow[s] += wv * grow[s];
            }
          });
          detail::col2im_add(dcol.data(), C, H, W, K, stride, pad, Ho, Wo,
                             nx->grad.data() + n * C * H * W);
        }
      }
    };
  }
  detail::check_finite(out, "conv2d");
  return out;
}

}  // namespace bevpaint
