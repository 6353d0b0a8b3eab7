#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstring>
#include <memory>
#include <vector>

#include "mono/nn/tensor.hpp"

namespace mono::nn {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

namespace detail {

// Patch matrix layout: row (c*kh + i)*kw + j, column ho*Wo + wo.
template <typename T>
void im2col(const T* x, int C, int H, int W, int kh, int kw, int sh, int sw, int ph, int pw,
            int Ho, int Wo, T* col) {
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        T* row = col + (static_cast<int64_t>(c) * kh * kw + i * kw + j) * Ho * Wo;
        for (int ho = 0; ho < Ho; ++ho) {
          const int hi = ho * sh - ph + i;
          if (hi < 0 || hi >= H) {
            std::memset(row + static_cast<int64_t>(ho) * Wo, 0, sizeof(T) * Wo);
            continue;
          }
          const T* src = x + (static_cast<int64_t>(c) * H + hi) * W;
          T* dst = row + static_cast<int64_t>(ho) * Wo;
          for (int wo = 0; wo < Wo; ++wo) {
            const int wi = wo * sw - pw + j;
            dst[wo] = (wi >= 0 && wi < W) ? src[wi] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int C, int H, int W, int kh, int kw, int sh, int sw, int ph, int pw,
                int Ho, int Wo, T* dx) {
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        const T* row = col + (static_cast<int64_t>(c) * kh * kw + i * kw + j) * Ho * Wo;
        for (int ho = 0; ho < Ho; ++ho) {
          const int hi = ho * sh - ph + i;
          if (hi < 0 || hi >= H) continue;
          T* dst = dx + (static_cast<int64_t>(c) * H + hi) * W;
          const T* src = row + static_cast<int64_t>(ho) * Wo;
          for (int wo = 0; wo < Wo; ++wo) {
            const int wi = wo * sw - pw + j;
            if (wi >= 0 && wi < W) dst[wi] += src[wo];
          }
        }
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise / reduction plumbing
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> add(const TensorPtr<T>& a, const TensorPtr<T>& b) {
  check_same_shape(*a, *b, "add");
  auto out = make_tensor<T>(a->shape);
  const int64_t n = out->numel();
  for (int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] + b->data[i];
  if (a->on_tape || b->on_tape) {
    out->on_tape = true;
    out->parents = {a, b};
    out->backward_fn = [a, b](Tensor<T>& self) {
      if (a->on_tape)
        for (size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i];
      if (b->on_tape)
        for (size_t i = 0; i < self.grad.size(); ++i) b->grad[i] += self.grad[i];
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> mul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
  check_same_shape(*a, *b, "mul");
  auto out = make_tensor<T>(a->shape);
  const int64_t n = out->numel();
  for (int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] * b->data[i];
  if (a->on_tape || b->on_tape) {
    out->on_tape = true;
    out->parents = {a, b};
    out->backward_fn = [a, b](Tensor<T>& self) {
      if (a->on_tape)
        for (size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i] * b->data[i];
      if (b->on_tape)
        for (size_t i = 0; i < self.grad.size(); ++i) b->grad[i] += self.grad[i] * a->data[i];
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> sum(const TensorPtr<T>& x) {
  auto out = make_tensor<T>({1});
  T acc = 0;
  for (const T& v : x->data) acc += v;
  out->data[0] = acc;
  if (x->on_tape) {
    out->on_tape = true;
    out->parents = {x};
    out->backward_fn = [x](Tensor<T>& self) {
      const T g = self.grad[0];
      for (size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g;
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> relu(const TensorPtr<T>& x) {
  auto out = make_tensor<T>(x->shape);
  const int64_t n = out->numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) out->data[i] = x->data[i] > T(0) ? x->data[i] : T(0);
  if (x->on_tape) {
    out->on_tape = true;
    out->parents = {x};
    out->backward_fn = [x](Tensor<T>& self) {
      const int64_t m = self.numel();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < m; ++i)
        if (x->data[i] > T(0)) x->grad[i] += self.grad[i];
    };
  }
  return out;
}

// (N, C, H, W) -> (N, C*H*W). Plain reshape copy.
template <typename T>
TensorPtr<T> flatten(const TensorPtr<T>& x) {
  if (x->shape.size() < 2) throw ShapeError("flatten: need at least 2 dims, got " + shape_str(x->shape));
  const int n = x->dim(0);
  const int rest = static_cast<int>(x->numel() / n);
  auto out = make_tensor<T>({n, rest});
  out->data = x->data;
  if (x->on_tape) {
    out->on_tape = true;
    out->parents = {x};
    out->backward_fn = [x](Tensor<T>& self) {
      for (size_t i = 0; i < self.grad.size(); ++i) x->grad[i] += self.grad[i];
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// conv2d: cross-correlation, zero padding, floor-division output size.
// Implemented as im2col + GEMM; one GEMM per image in the forward so results
// land directly in the NCHW output slice, batched GEMMs in the backward.
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> conv2d(const TensorPtr<T>& x, const TensorPtr<T>& w, const TensorPtr<T>& b,
                    int stride_h, int stride_w, int pad_h, int pad_w) {
  if (x->shape.size() != 4)
    throw ShapeError("conv2d: input must be NCHW, got " + shape_str(x->shape));
  if (w->shape.size() != 4)
    throw ShapeError("conv2d: weight must be (out,in,kh,kw), got " + shape_str(w->shape));
  const int N = x->dim(0), C = x->dim(1), H = x->dim(2), W = x->dim(3);
  const int O = w->dim(0), kh = w->dim(2), kw = w->dim(3);
  if (w->dim(1) != C)
    throw ShapeError("conv2d: input channel axis 1 is " + std::to_string(C) +
                     " but weight expects " + std::to_string(w->dim(1)));
  if (b->numel() != O)
    throw ShapeError("conv2d: bias axis 0 is " + std::to_string(static_cast<int>(b->numel())) +
                     ", expected " + std::to_string(O));
  if (stride_h < 1 || stride_w < 1) throw ValidationError("conv2d: stride must be >= 1");
  const int Ho = (H + 2 * pad_h - kh) / stride_h + 1;
  const int Wo = (W + 2 * pad_w - kw) / stride_w + 1;
  if (H + 2 * pad_h < kh || W + 2 * pad_w < kw || Ho <= 0 || Wo <= 0)
    throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                     " exceeds padded input on spatial axes (" + std::to_string(H) + "x" +
                     std::to_string(W) + ")");

  auto out = make_tensor<T>({N, O, Ho, Wo});
  const int64_t ckk = static_cast<int64_t>(C) * kh * kw;
  const int64_t hw = static_cast<int64_t>(Ho) * Wo;
  ConstMatMap<T> wm(w->data.data(), O, ckk);

#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    std::vector<T> col(static_cast<size_t>(ckk * hw));
    detail::im2col(x->data.data() + static_cast<int64_t>(n) * C * H * W, C, H, W, kh, kw, stride_h,
                   stride_w, pad_h, pad_w, Ho, Wo, col.data());
    ConstMatMap<T> cm(col.data(), ckk, hw);
    MatMap<T> om(out->data.data() + static_cast<int64_t>(n) * O * hw, O, hw);
    om.noalias() = wm * cm;
    for (int o = 0; o < O; ++o) om.row(o).array() += b->data[o];
  }

  if (x->on_tape || w->on_tape || b->on_tape) {
    out->on_tape = true;
    out->parents = {x, w, b};
    const int sh = stride_h, sw = stride_w, ph = pad_h, pw = pad_w;
    out->backward_fn = [x, w, b, N, C, H, W, O, kh, kw, sh, sw, ph, pw, Ho, Wo](Tensor<T>& self) {
      const int64_t ckk2 = static_cast<int64_t>(C) * kh * kw;
      const int64_t hw2 = static_cast<int64_t>(Ho) * Wo;
      // gy as (O x N*HoWo): column block per image.
      std::vector<T> gy(static_cast<size_t>(O * N * hw2));
#pragma omp parallel for schedule(static)
      for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o)
          std::memcpy(gy.data() + (static_cast<int64_t>(o) * N + n) * hw2,
                      self.grad.data() + (static_cast<int64_t>(n) * O + o) * hw2,
                      sizeof(T) * hw2);
      MatMap<T> gym(gy.data(), O, static_cast<int64_t>(N) * hw2);

      if (b->on_tape) {
        for (int o = 0; o < O; ++o) {
          T acc = 0;
          const T* row = gy.data() + static_cast<int64_t>(o) * N * hw2;
          for (int64_t i = 0; i < static_cast<int64_t>(N) * hw2; ++i) acc += row[i];
          b->grad[o] += acc;
        }
      }
      if (w->on_tape || x->on_tape) {
        std::vector<T> col(static_cast<size_t>(ckk2 * N * hw2));
#pragma omp parallel for schedule(static)
        for (int n = 0; n < N; ++n) {
          std::vector<T> col_n(static_cast<size_t>(ckk2 * hw2));
          detail::im2col(x->data.data() + static_cast<int64_t>(n) * C * H * W, C, H, W, kh, kw, sh,
                         sw, ph, pw, Ho, Wo, col_n.data());
          for (int64_t r = 0; r < ckk2; ++r)
            std::memcpy(col.data() + (r * N + n) * hw2, col_n.data() + r * hw2, sizeof(T) * hw2);
        }
        MatMap<T> colm(col.data(), ckk2, static_cast<int64_t>(N) * hw2);
        if (w->on_tape) {
          MatMap<T> gwm(w->grad.data(), O, ckk2);
          gwm.noalias() += gym * colm.transpose();
        }
        if (x->on_tape) {
          std::vector<T> dcol(static_cast<size_t>(ckk2 * N * hw2));
          MatMap<T> dcolm(dcol.data(), ckk2, static_cast<int64_t>(N) * hw2);
          ConstMatMap<T> wm2(w->data.data(), O, ckk2);
          dcolm.noalias() = wm2.transpose() * gym;
#pragma omp parallel for schedule(static)
          for (int n = 0; n < N; ++n) {
            std::vector<T> dcol_n(static_cast<size_t>(ckk2 * hw2));
            for (int64_t r = 0; r < ckk2; ++r)
              std::memcpy(dcol_n.data() + r * hw2, dcol.data() + (r * N + n) * hw2,
                          sizeof(T) * hw2);
            detail::col2im_add(dcol_n.data(), C, H, W, kh, kw, sh, sw, ph, pw, Ho, Wo,
                               x->grad.data() + static_cast<int64_t>(n) * C * H * W);
          }
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// batchnorm2d. Train mode normalizes with batch statistics (biased variance)
// and moves running stats by `momentum`; eval mode is a per-channel affine map
// of the input using running stats.
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> batchnorm2d(const TensorPtr<T>& x, const TensorPtr<T>& scale,
                         const TensorPtr<T>& shift, std::vector<T>& running_mean,
                         std::vector<T>& running_var, T momentum, T eps, bool training,
                         bool update_running = true) {
  if (x->shape.size() != 4)
    throw ShapeError("batchnorm2d: input must be NCHW, got " + shape_str(x->shape));
  const int N = x->dim(0), C = x->dim(1), H = x->dim(2), W = x->dim(3);
  if (scale->numel() != C || shift->numel() != C || static_cast<int>(running_mean.size()) != C ||
      static_cast<int>(running_var.size()) != C)
    throw ShapeError("batchnorm2d: channel axis 1 is " + std::to_string(C) +
                     " but parameter length is " + std::to_string(static_cast<int>(scale->numel())));
  for (int c = 0; c < C; ++c)
    if (!(running_var[c] > T(0)))
      throw StructureError("batchnorm2d: running_var[" + std::to_string(c) +
                           "] is not positive; state corrupted");
  if (training && N < 2) throw ValidationError("batchnorm2d: train mode needs batch size >= 2");

  const int64_t plane = static_cast<int64_t>(H) * W;
  const int64_t m = static_cast<int64_t>(N) * plane;
  auto out = make_tensor<T>(x->shape);

  // Per-channel mean/invstd used for this pass.
  auto mean = std::make_shared<std::vector<T>>(C);
  auto invstd = std::make_shared<std::vector<T>>(C);
  if (training) {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
      T s = 0;
      for (int n = 0; n < N; ++n) {
        const T* p = x->data.data() + (static_cast<int64_t>(n) * C + c) * plane;
        for (int64_t i = 0; i < plane; ++i) s += p[i];
      }
      const T mu = s / static_cast<T>(m);
      T v = 0;
      for (int n = 0; n < N; ++n) {
        const T* p = x->data.data() + (static_cast<int64_t>(n) * C + c) * plane;
        for (int64_t i = 0; i < plane; ++i) {
          const T d = p[i] - mu;
          v += d * d;
        }
      }
      v /= static_cast<T>(m);
      (*mean)[c] = mu;
      (*invstd)[c] = T(1) / std::sqrt(v + eps);
      if (update_running) {
        const T unbiased = (m > 1) ? v * static_cast<T>(m) / static_cast<T>(m - 1) : v;
        running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * mu;
        running_var[c] = (T(1) - momentum) * running_var[c] + momentum * unbiased;
      }
    }
  } else {
    for (int c = 0; c < C; ++c) {
      (*mean)[c] = running_mean[c];
      (*invstd)[c] = T(1) / std::sqrt(running_var[c] + eps);
    }
  }

#pragma omp parallel for schedule(static)
  for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
    const int c = static_cast<int>(nc % C);
    const T* p = x->data.data() + nc * plane;
    T* q = out->data.data() + nc * plane;
    const T a = scale->data[c] * (*invstd)[c];
    const T d = shift->data[c] - a * (*mean)[c];
    for (int64_t i = 0; i < plane; ++i) q[i] = a * p[i] + d;
  }

  if (x->on_tape || scale->on_tape || shift->on_tape) {
    out->on_tape = true;
    out->parents = {x, scale, shift};
    const bool train_stats = training;
    out->backward_fn = [x, scale, shift, mean, invstd, N, C, plane, m,
                        train_stats](Tensor<T>& self) {
#pragma omp parallel for schedule(static)
      for (int c = 0; c < C; ++c) {
        const T mu = (*mean)[c], is = (*invstd)[c];
        T sum_g = 0, sum_gx = 0;  // gx: gradient dotted with normalized input
        for (int n = 0; n < N; ++n) {
          const int64_t base = (static_cast<int64_t>(n) * C + c) * plane;
          const T* g = self.grad.data() + base;
          const T* px = x->data.data() + base;
          for (int64_t i = 0; i < plane; ++i) {
            sum_g += g[i];
            sum_gx += g[i] * (px[i] - mu) * is;
          }
        }
        if (shift->on_tape) shift->grad[c] += sum_g;
        if (scale->on_tape) scale->grad[c] += sum_gx;
        if (x->on_tape) {
          const T a = scale->data[c] * is;
          if (train_stats) {
            const T inv_m = T(1) / static_cast<T>(m);
            for (int n = 0; n < N; ++n) {
              const int64_t base = (static_cast<int64_t>(n) * C + c) * plane;
              const T* g = self.grad.data() + base;
              const T* px = x->data.data() + base;
              T* gx = x->grad.data() + base;
              for (int64_t i = 0; i < plane; ++i) {
                const T xhat = (px[i] - mu) * is;
                gx[i] += a * (g[i] - sum_g * inv_m - xhat * sum_gx * inv_m);
              }
            }
          } else {
            for (int n = 0; n < N; ++n) {
              const int64_t base = (static_cast<int64_t>(n) * C + c) * plane;
              const T* g = self.grad.data() + base;
              T* gx = x->grad.data() + base;
              for (int64_t i = 0; i < plane; ++i) gx[i] += a * g[i];
            }
          }
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Max pooling (and its adaptive variant): gradients route to the argmax, ties
// broken by first row-major position.
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
TensorPtr<T> maxpool_windows(const TensorPtr<T>& x, int Ho, int Wo,
                             const std::vector<int>& hstart, const std::vector<int>& hend,
                             const std::vector<int>& wstart, const std::vector<int>& wend) {
  const int N = x->dim(0), C = x->dim(1), H = x->dim(2), W = x->dim(3);
  auto out = make_tensor<T>({N, C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<int64_t>>(out->numel());
#pragma omp parallel for schedule(static)
  for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
    const T* plane = x->data.data() + nc * H * W;
    T* op = out->data.data() + nc * Ho * Wo;
    int64_t* ap = argmax->data() + nc * Ho * Wo;
    for (int ho = 0; ho < Ho; ++ho) {
      for (int wo = 0; wo < Wo; ++wo) {
        T best = -std::numeric_limits<T>::infinity();
        int64_t best_idx = -1;
        for (int h = hstart[ho]; h < hend[ho]; ++h)
          for (int w = wstart[wo]; w < wend[wo]; ++w) {
            const T v = plane[static_cast<int64_t>(h) * W + w];
            if (v > best) {
              best = v;
              best_idx = static_cast<int64_t>(h) * W + w;
            }
          }
        op[static_cast<int64_t>(ho) * Wo + wo] = best;
        ap[static_cast<int64_t>(ho) * Wo + wo] = nc * H * W + best_idx;
      }
    }
  }
  if (x->on_tape) {
    out->on_tape = true;
    out->parents = {x};
    const int64_t per_plane = static_cast<int64_t>(Ho) * Wo;
    const int64_t planes = static_cast<int64_t>(N) * C;
    out->backward_fn = [x, argmax, per_plane, planes](Tensor<T>& self) {
#pragma omp parallel for schedule(static)
      for (int64_t nc = 0; nc < planes; ++nc)
        for (int64_t i = nc * per_plane; i < (nc + 1) * per_plane; ++i)
          x->grad[(*argmax)[i]] += self.grad[i];
    };
  }
  return out;
}

}  // namespace detail

template <typename T>
TensorPtr<T> maxpool2d(const TensorPtr<T>& x, int k, int stride) {
  if (x->shape.size() != 4)
    throw ShapeError("maxpool2d: input must be NCHW, got " + shape_str(x->shape));
  const int H = x->dim(2), W = x->dim(3);
  if (k > H || k > W)
    throw ShapeError("maxpool2d: window " + std::to_string(k) + " exceeds input " +
                     std::to_string(H) + "x" + std::to_string(W));
  if (stride < 1) throw ValidationError("maxpool2d: stride must be >= 1");
  const int Ho = (H - k) / stride + 1, Wo = (W - k) / stride + 1;
  std::vector<int> hs(Ho), he(Ho), ws(Wo), we(Wo);
  for (int i = 0; i < Ho; ++i) hs[i] = i * stride, he[i] = i * stride + k;
  for (int i = 0; i < Wo; ++i) ws[i] = i * stride, we[i] = i * stride + k;
  return detail::maxpool_windows(x, Ho, Wo, hs, he, ws, we);
}

template <typename T>
TensorPtr<T> adaptive_maxpool2d(const TensorPtr<T>& x, int out_h, int out_w) {
  if (x->shape.size() != 4)
    throw ShapeError("adaptive_maxpool2d: input must be NCHW, got " + shape_str(x->shape));
  if (out_h < 1 || out_w < 1) throw ValidationError("adaptive_maxpool2d: output dims must be >= 1");
  const int H = x->dim(2), W = x->dim(3);
  std::vector<int> hs(out_h), he(out_h), ws(out_w), we(out_w);
  for (int i = 0; i < out_h; ++i) {
    hs[i] = static_cast<int>(static_cast<int64_t>(i) * H / out_h);
    he[i] = static_cast<int>((static_cast<int64_t>(i + 1) * H + out_h - 1) / out_h);
    if (he[i] <= hs[i]) he[i] = hs[i] + 1;
  }
  for (int i = 0; i < out_w; ++i) {
    ws[i] = static_cast<int>(static_cast<int64_t>(i) * W / out_w);
    we[i] = static_cast<int>((static_cast<int64_t>(i + 1) * W + out_w - 1) / out_w);
    if (we[i] <= ws[i]) we[i] = ws[i] + 1;
  }
  return detail::maxpool_windows(x, out_h, out_w, hs, he, ws, we);
}

// ---------------------------------------------------------------------------
// linear: y = x * W^T + b with x (N,D), W (O,D).
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> linear(const TensorPtr<T>& x, const TensorPtr<T>& w, const TensorPtr<T>& b) {
  if (x->shape.size() != 2)
    throw ShapeError("linear: input must be (N,D), got " + shape_str(x->shape));
  if (w->shape.size() != 2)
    throw ShapeError("linear: weight must be (O,D), got " + shape_str(w->shape));
  const int N = x->dim(0), D = x->dim(1), O = w->dim(0);
  if (w->dim(1) != D)
    throw ShapeError("linear: feature axis 1 is " + std::to_string(D) + " but weight expects " +
                     std::to_string(w->dim(1)));
  if (b->numel() != O)
    throw ShapeError("linear: bias axis 0 is " + std::to_string(static_cast<int>(b->numel())) +
                     ", expected " + std::to_string(O));
  auto out = make_tensor<T>({N, O});
  ConstMatMap<T> xm(x->data.data(), N, D), wm(w->data.data(), O, D);
  MatMap<T> om(out->data.data(), N, O);
  om.noalias() = xm * wm.transpose();
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < O; ++o) om(n, o) += b->data[o];

  if (x->on_tape || w->on_tape || b->on_tape) {
    out->on_tape = true;
    out->parents = {x, w, b};
    out->backward_fn = [x, w, b, N, D, O](Tensor<T>& self) {
      ConstMatMap<T> gm(self.grad.data(), N, O);
      if (x->on_tape) {
        MatMap<T> gx(x->grad.data(), N, D);
        ConstMatMap<T> wm2(w->data.data(), O, D);
        gx.noalias() += gm * wm2;
      }
      if (w->on_tape) {
        MatMap<T> gw(w->grad.data(), O, D);
        ConstMatMap<T> xm2(x->data.data(), N, D);
        gw.noalias() += gm.transpose() * xm2;
      }
      if (b->on_tape)
        for (int o = 0; o < O; ++o) {
          T acc = 0;
          for (int n = 0; n < N; ++n) acc += gm(n, o);
          b->grad[o] += acc;
        }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mean negative log-softmax of the true class, max-subtracted for stability.
// Optional per-sample weights (summed loss divided by total weight).
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> softmax_cross_entropy(const TensorPtr<T>& logits, const std::vector<int>& labels,
                                   const std::vector<T>& weights = {}) {
  if (logits->shape.size() != 2)
    throw ShapeError("softmax_cross_entropy: logits must be (N,K), got " +
                     shape_str(logits->shape));
  const int N = logits->dim(0), K = logits->dim(1);
  if (N < 1) throw ValidationError("softmax_cross_entropy: empty batch");
  if (static_cast<int>(labels.size()) != N)
    throw ShapeError("softmax_cross_entropy: label count " + std::to_string(labels.size()) +
                     " does not match batch axis " + std::to_string(N));
  if (!weights.empty() && static_cast<int>(weights.size()) != N)
    throw ShapeError("softmax_cross_entropy: weight count does not match batch axis");
  for (int i = 0; i < N; ++i)
    if (labels[i] < 0 || labels[i] >= K)
      throw ValidationError("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                            " out of range [0," + std::to_string(K) + ") at row " +
                            std::to_string(i));

  auto probs = std::make_shared<std::vector<T>>(static_cast<size_t>(N) * K);
  T total_w = 0, loss_acc = 0;
  for (int i = 0; i < N; ++i) {
    const T* row = logits->data.data() + static_cast<int64_t>(i) * K;
    T* prow = probs->data() + static_cast<int64_t>(i) * K;
    T mx = row[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    T z = 0;
    for (int k = 0; k < K; ++k) {
      prow[k] = std::exp(row[k] - mx);
      z += prow[k];
    }
    const T log_z = std::log(z);
    for (int k = 0; k < K; ++k) prow[k] /= z;
    const T wi = weights.empty() ? T(1) : weights[i];
    loss_acc += wi * (log_z - (row[labels[i]] - mx));
    total_w += wi;
  }
  if (!(total_w > T(0))) throw ValidationError("softmax_cross_entropy: total weight must be > 0");

  auto out = make_tensor<T>({1});
  out->data[0] = loss_acc / total_w;
  if (logits->on_tape) {
    out->on_tape = true;
    out->parents = {logits};
    auto labels_copy = std::make_shared<std::vector<int>>(labels);
    auto weights_copy = std::make_shared<std::vector<T>>(weights);
    out->backward_fn = [logits, probs, labels_copy, weights_copy, N, K, total_w](Tensor<T>& self) {
      const T g = self.grad[0] / total_w;
      for (int i = 0; i < N; ++i) {
        const T wi = weights_copy->empty() ? T(1) : (*weights_copy)[i];
        const T* prow = probs->data() + static_cast<int64_t>(i) * K;
        T* grow = logits->grad.data() + static_cast<int64_t>(i) * K;
        for (int k = 0; k < K; ++k)
          grow[k] += g * wi * (prow[k] - (k == (*labels_copy)[i] ? T(1) : T(0)));
      }
    };
  }
  return out;
}

// Forward-only softmax rows; used by evaluation paths that average scores.
template <typename T>
void softmax_rows(const T* logits, int N, int K, T* probs) {
  for (int i = 0; i < N; ++i) {
    const T* row = logits + static_cast<int64_t>(i) * K;
    T* prow = probs + static_cast<int64_t>(i) * K;
    T mx = row[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    T z = 0;
    for (int k = 0; k < K; ++k) {
      prow[k] = std::exp(row[k] - mx);
      z += prow[k];
    }
    for (int k = 0; k < K; ++k) prow[k] /= z;
  }
}

}  // namespace mono::nn
