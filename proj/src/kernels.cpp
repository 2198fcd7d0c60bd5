#include "fpnseg/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace fpnseg::kernels {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

void require_rank4(const Shape& s, const char* op) {
  if (s.size() != 4)
    throw ShapeError(std::string(op) + ": expected NCHW input, got " +
                     shape_string(s));
}

// Output columns ox whose source column ox*stride - pad + k lies in [0, W).
void valid_range(int64_t width, int64_t out, int64_t k, int64_t stride,
                 int64_t pad, int64_t& lo, int64_t& hi) {
  int64_t off = pad - k;
  lo = off > 0 ? (off + stride - 1) / stride : 0;
  int64_t last = width - 1 + off;
  hi = last < 0 ? 0 : std::min<int64_t>(out, last / stride + 1);
  if (hi < lo) hi = lo;
}

template <typename T>
void im2col(const T* x, int64_t C, int64_t H, int64_t W, int64_t kh,
            int64_t kw, int64_t stride, int64_t pad, int64_t Ho, int64_t Wo,
            T* col) {
  const int64_t P = Ho * Wo;
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t ky = 0; ky < kh; ++ky) {
      for (int64_t kx = 0; kx < kw; ++kx) {
        T* row = col + ((c * kh + ky) * kw + kx) * P;
        int64_t lo, hi;
        valid_range(W, Wo, kx, stride, pad, lo, hi);
        for (int64_t oy = 0; oy < Ho; ++oy) {
          T* dst = row + oy * Wo;
          int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + Wo, T{0});
            continue;
          }
          const T* src = x + (c * H + iy) * W;
          std::fill(dst, dst + lo, T{0});
          if (stride == 1) {
            std::copy(src + lo - pad + kx, src + hi - pad + kx, dst + lo);
          } else {
            for (int64_t ox = lo; ox < hi; ++ox)
              dst[ox] = src[ox * stride - pad + kx];
          }
          std::fill(dst + hi, dst + Wo, T{0});
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int64_t C, int64_t H, int64_t W, int64_t kh,
            int64_t kw, int64_t stride, int64_t pad, int64_t Ho, int64_t Wo,
            T* x) {
  const int64_t P = Ho * Wo;
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t ky = 0; ky < kh; ++ky) {
      for (int64_t kx = 0; kx < kw; ++kx) {
        const T* row = col + ((c * kh + ky) * kw + kx) * P;
        int64_t lo, hi;
        valid_range(W, Wo, kx, stride, pad, lo, hi);
        for (int64_t oy = 0; oy < Ho; ++oy) {
          int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          T* dst = x + (c * H + iy) * W;
          const T* src = row + oy * Wo;
          for (int64_t ox = lo; ox < hi; ++ox)
            dst[ox * stride - pad + kx] += src[ox];
        }
      }
    }
  }
}

struct BilinearTap {
  int64_t i0, i1;
  double w0, w1;
};

std::vector<BilinearTap> bilinear_taps(int64_t in, int64_t out) {
  std::vector<BilinearTap> taps(static_cast<size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (int64_t o = 0; o < out; ++o) {
    double src = std::max(0.0, (static_cast<double>(o) + 0.5) * scale - 0.5);
    auto i0 = std::min<int64_t>(static_cast<int64_t>(src), in - 1);
    int64_t i1 = std::min<int64_t>(i0 + 1, in - 1);
    double l1 = src - static_cast<double>(i0);
    taps[static_cast<size_t>(o)] = {i0, i1, 1.0 - l1, l1};
  }
  return taps;
}

}  // namespace

int64_t conv_out_size(int64_t in, int64_t kernel, int64_t stride,
                      int64_t padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>* bias, int64_t stride,
                      int64_t padding) {
  require_rank4(input.shape(), "conv2d");
  require_rank4(weight.shape(), "conv2d weight");
  const int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2),
                W = input.dim(3);
  const int64_t Co = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != C)
    throw ShapeError("conv2d: weight expects " + std::to_string(weight.dim(1)) +
                     " input channels, input has " + std::to_string(C));
  if (stride < 1 || padding < 0)
    throw ValueError("conv2d: stride must be >= 1 and padding >= 0");
  if (H + 2 * padding < kh || W + 2 * padding < kw)
    throw ShapeError("conv2d: kernel larger than padded input " +
                     shape_string(input.shape()));
  if (bias && (bias->rank() != 1 || bias->dim(0) != Co))
    throw ShapeError("conv2d: bias shape " + shape_string(bias->shape()));

  const int64_t Ho = conv_out_size(H, kh, stride, padding);
  const int64_t Wo = conv_out_size(W, kw, stride, padding);
  const int64_t K = C * kh * kw, P = Ho * Wo;
  const bool direct = kh == 1 && kw == 1 && stride == 1 && padding == 0;

  BasicTensor<T> out({N, Co, Ho, Wo});
  std::vector<T> col(direct ? 0 : static_cast<size_t>(K * P));
  ConstMatMap<T> wm(weight.ptr(), Co, K);
  for (int64_t n = 0; n < N; ++n) {
    const T* xn = input.ptr() + n * C * H * W;
    const T* cp = xn;
    if (!direct) {
      im2col(xn, C, H, W, kh, kw, stride, padding, Ho, Wo, col.data());
      cp = col.data();
    }
    MatMap<T> om(out.ptr() + n * Co * P, Co, P);
    om.noalias() = wm * ConstMatMap<T>(cp, K, P);
    if (bias) {
      for (int64_t o = 0; o < Co; ++o) om.row(o).array() += (*bias)[o];
    }
  }
  return out;
}

template <typename T>
void conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                     const BasicTensor<T>& grad_out, int64_t stride,
                     int64_t padding, BasicTensor<T>* grad_input,
                     BasicTensor<T>* grad_weight, BasicTensor<T>* grad_bias) {
  const int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2),
                W = input.dim(3);
  const int64_t Co = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  const int64_t Ho = grad_out.dim(2), Wo = grad_out.dim(3);
  const int64_t K = C * kh * kw, P = Ho * Wo;
  const bool direct = kh == 1 && kw == 1 && stride == 1 && padding == 0;

  if (grad_input) *grad_input = BasicTensor<T>(input.shape());
  if (grad_weight) *grad_weight = BasicTensor<T>(weight.shape());
  std::vector<double> bias_acc(static_cast<size_t>(Co), 0.0);

  std::vector<T> col(direct || !grad_weight ? 0 : static_cast<size_t>(K * P));
  std::vector<T> gcol(direct || !grad_input ? 0 : static_cast<size_t>(K * P));
  ConstMatMap<T> wm(weight.ptr(), Co, K);
  for (int64_t n = 0; n < N; ++n) {
    const T* xn = input.ptr() + n * C * H * W;
    ConstMatMap<T> gy(grad_out.ptr() + n * Co * P, Co, P);
    if (grad_weight) {
      const T* cp = xn;
      if (!direct) {
        im2col(xn, C, H, W, kh, kw, stride, padding, Ho, Wo, col.data());
        cp = col.data();
      }
      MatMap<T> gw(grad_weight->ptr(), Co, K);
      gw.noalias() += gy * ConstMatMap<T>(cp, K, P).transpose();
    }
    if (grad_input) {
      T* gxn = grad_input->ptr() + n * C * H * W;
      if (direct) {
        MatMap<T>(gxn, C, P).noalias() = wm.transpose() * gy;
      } else {
        MatMap<T>(gcol.data(), K, P).noalias() = wm.transpose() * gy;
        col2im(gcol.data(), C, H, W, kh, kw, stride, padding, Ho, Wo, gxn);
      }
    }
    if (grad_bias) {
      for (int64_t o = 0; o < Co; ++o) {
        const T* row = grad_out.ptr() + (n * Co + o) * P;
        double s = 0.0;
        for (int64_t p = 0; p < P; ++p) s += static_cast<double>(row[p]);
        bias_acc[static_cast<size_t>(o)] += s;
      }
    }
  }
  if (grad_bias) {
    *grad_bias = BasicTensor<T>({Co});
    for (int64_t o = 0; o < Co; ++o)
      (*grad_bias)[o] = static_cast<T>(bias_acc[static_cast<size_t>(o)]);
  }
}

template <typename T>
BasicTensor<T> batch_norm2d(const BasicTensor<T>& input,
                            const BasicTensor<T>& gamma,
                            const BasicTensor<T>& beta,
                            BasicTensor<T>& running_mean,
                            BasicTensor<T>& running_var, Mode mode,
                            double momentum, double epsilon,
                            BatchNormStats* stats) {
  require_rank4(input.shape(), "batch_norm2d");
  const int64_t N = input.dim(0), C = input.dim(1),
                HW = input.dim(2) * input.dim(3);
  if (!(epsilon > 0.0)) throw ValueError("batch_norm2d: epsilon must be > 0");
  for (const BasicTensor<T>* t : {&gamma, &beta, static_cast<const BasicTensor<T>*>(&running_mean), static_cast<const BasicTensor<T>*>(&running_var)})
    if (t->rank() != 1 || t->dim(0) != C)
      throw ShapeError("batch_norm2d: per-channel tensor shape " +
                       shape_string(t->shape()) + " for " + std::to_string(C) +
                       " channels");
  const int64_t m = N * HW;
  if (mode == Mode::Train && m == 1)
    throw ValueError(
        "batch_norm2d: degenerate batch (one value per channel) in train mode");

  BatchNormStats local;
  BatchNormStats& st = stats ? *stats : local;
  st.mean.assign(static_cast<size_t>(C), 0.0);
  st.invstd.assign(static_cast<size_t>(C), 0.0);

  BasicTensor<T> out(input.shape());
  for (int64_t c = 0; c < C; ++c) {
    double mean, invstd;
    if (mode == Mode::Train) {
      double s = 0.0;
      for (int64_t n = 0; n < N; ++n) {
        const T* p = input.ptr() + (n * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) s += static_cast<double>(p[i]);
      }
      mean = s / static_cast<double>(m);
      double ss = 0.0;
      for (int64_t n = 0; n < N; ++n) {
        const T* p = input.ptr() + (n * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) {
          double d = static_cast<double>(p[i]) - mean;
          ss += d * d;
        }
      }
      double var = ss / static_cast<double>(m);
      invstd = 1.0 / std::sqrt(var + epsilon);
      double unbiased = ss / static_cast<double>(m - 1);
      running_mean[c] = static_cast<T>((1.0 - momentum) * running_mean[c] +
                                       momentum * mean);
      running_var[c] = static_cast<T>((1.0 - momentum) * running_var[c] +
                                      momentum * unbiased);
    } else {
      mean = static_cast<double>(running_mean[c]);
      invstd = 1.0 / std::sqrt(static_cast<double>(running_var[c]) + epsilon);
    }
    st.mean[static_cast<size_t>(c)] = mean;
    st.invstd[static_cast<size_t>(c)] = invstd;
    const double scale = static_cast<double>(gamma[c]) * invstd;
    const double shift = static_cast<double>(beta[c]) - mean * scale;
    const T sc = static_cast<T>(scale), sh = static_cast<T>(shift);
    for (int64_t n = 0; n < N; ++n) {
      const T* p = input.ptr() + (n * C + c) * HW;
      T* q = out.ptr() + (n * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) q[i] = p[i] * sc + sh;
    }
  }
  return out;
}

template <typename T>
void batch_norm2d_backward(const BasicTensor<T>& input,
                           const BasicTensor<T>& gamma,
                           const BatchNormStats& stats, Mode mode,
                           const BasicTensor<T>& grad_out,
                           BasicTensor<T>* grad_input,
                           BasicTensor<T>* grad_gamma,
                           BasicTensor<T>* grad_beta) {
  const int64_t N = input.dim(0), C = input.dim(1),
                HW = input.dim(2) * input.dim(3);
  const auto m = static_cast<double>(N * HW);
  if (grad_input) *grad_input = BasicTensor<T>(input.shape());
  if (grad_gamma) *grad_gamma = BasicTensor<T>({C});
  if (grad_beta) *grad_beta = BasicTensor<T>({C});
  for (int64_t c = 0; c < C; ++c) {
    const double mean = stats.mean[static_cast<size_t>(c)];
    const double invstd = stats.invstd[static_cast<size_t>(c)];
    double sum_gy = 0.0, sum_gy_xhat = 0.0;
    for (int64_t n = 0; n < N; ++n) {
      const T* x = input.ptr() + (n * C + c) * HW;
      const T* g = grad_out.ptr() + (n * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) {
        double gy = static_cast<double>(g[i]);
        sum_gy += gy;
        sum_gy_xhat += gy * (static_cast<double>(x[i]) - mean) * invstd;
      }
    }
    if (grad_gamma) (*grad_gamma)[c] = static_cast<T>(sum_gy_xhat);
    if (grad_beta) (*grad_beta)[c] = static_cast<T>(sum_gy);
    if (!grad_input) continue;
    const double gm = static_cast<double>(gamma[c]);
    for (int64_t n = 0; n < N; ++n) {
      const T* x = input.ptr() + (n * C + c) * HW;
      const T* g = grad_out.ptr() + (n * C + c) * HW;
      T* gx = grad_input->ptr() + (n * C + c) * HW;
      if (mode == Mode::Train) {
        // d/dx of gamma * xhat with batch statistics.
        const double k = gm * invstd / m;
        for (int64_t i = 0; i < HW; ++i) {
          double xhat = (static_cast<double>(x[i]) - mean) * invstd;
          gx[i] = static_cast<T>(
              k * (m * static_cast<double>(g[i]) - sum_gy - xhat * sum_gy_xhat));
        }
      } else {
        const T k = static_cast<T>(gm * invstd);
        for (int64_t i = 0; i < HW; ++i) gx[i] = g[i] * k;
      }
    }
  }
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  BasicTensor<T> out(input.shape());
  const T* x = input.ptr();
  T* y = out.ptr();
  for (int64_t i = 0; i < input.numel(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input,
                             const BasicTensor<T>& grad_out) {
  BasicTensor<T> out(input.shape());
  const T* x = input.ptr();
  const T* g = grad_out.ptr();
  T* y = out.ptr();
  for (int64_t i = 0; i < input.numel(); ++i) y[i] = x[i] > T{0} ? g[i] : T{0};
  return out;
}

template <typename T>
BasicTensor<T> max_pool2d(const BasicTensor<T>& input, int64_t kernel,
                          int64_t stride, int64_t padding,
                          std::vector<int64_t>* argmax) {
  require_rank4(input.shape(), "max_pool2d");
  const int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2),
                W = input.dim(3);
  if (kernel < 1 || stride < 1 || padding < 0 || 2 * padding > kernel)
    throw ValueError("max_pool2d: invalid kernel/stride/padding");
  if (H + 2 * padding < kernel || W + 2 * padding < kernel)
    throw ShapeError("max_pool2d: window larger than input " +
                     shape_string(input.shape()));
  const int64_t Ho = conv_out_size(H, kernel, stride, padding);
  const int64_t Wo = conv_out_size(W, kernel, stride, padding);
  BasicTensor<T> out({N, C, Ho, Wo});
  if (argmax) argmax->assign(static_cast<size_t>(out.numel()), -1);
  int64_t o = 0;
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const T* x = input.ptr() + nc * H * W;
    for (int64_t oy = 0; oy < Ho; ++oy) {
      const int64_t y0 = std::max<int64_t>(0, oy * stride - padding);
      const int64_t y1 = std::min<int64_t>(H, oy * stride - padding + kernel);
      for (int64_t ox = 0; ox < Wo; ++ox, ++o) {
        const int64_t x0 = std::max<int64_t>(0, ox * stride - padding);
        const int64_t x1 = std::min<int64_t>(W, ox * stride - padding + kernel);
        T best = -std::numeric_limits<T>::infinity();
        int64_t arg = -1;
        for (int64_t iy = y0; iy < y1; ++iy)
          for (int64_t ix = x0; ix < x1; ++ix)
            if (arg < 0 || x[iy * W + ix] > best) {
              best = x[iy * W + ix];
              arg = iy * W + ix;
            }
        out[o] = best;
        if (argmax) (*argmax)[static_cast<size_t>(o)] = arg;
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> max_pool2d_backward(const Shape& input_shape,
                                   const std::vector<int64_t>& argmax,
                                   const BasicTensor<T>& grad_out) {
  BasicTensor<T> gx(input_shape);
  const int64_t plane_in = input_shape[2] * input_shape[3];
  const int64_t plane_out = grad_out.dim(2) * grad_out.dim(3);
  const int64_t planes = input_shape[0] * input_shape[1];
  for (int64_t nc = 0; nc < planes; ++nc)
    for (int64_t j = 0; j < plane_out; ++j) {
      int64_t o = nc * plane_out + j;
      int64_t a = argmax[static_cast<size_t>(o)];
      if (a >= 0) gx[nc * plane_in + a] += grad_out[o];
    }
  return gx;
}

template <typename T>
BasicTensor<T> upsample_nearest(const BasicTensor<T>& input, int64_t factor) {
  require_rank4(input.shape(), "upsample_nearest");
  if (factor < 1) throw ValueError("upsample_nearest: factor must be >= 1");
  const int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2),
                W = input.dim(3);
  const int64_t Ho = H * factor, Wo = W * factor;
  BasicTensor<T> out({N, C, Ho, Wo});
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const T* x = input.ptr() + nc * H * W;
    T* y = out.ptr() + nc * Ho * Wo;
    for (int64_t oy = 0; oy < Ho; ++oy) {
      const T* src = x + (oy / factor) * W;
      T* dst = y + oy * Wo;
      for (int64_t ox = 0; ox < Wo; ++ox) dst[ox] = src[ox / factor];
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> upsample_nearest_backward(const BasicTensor<T>& grad_out,
                                         int64_t factor) {
  const int64_t N = grad_out.dim(0), C = grad_out.dim(1),
                Ho = grad_out.dim(2), Wo = grad_out.dim(3);
  const int64_t H = Ho / factor, W = Wo / factor;
  BasicTensor<T> gx({N, C, H, W});
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const T* g = grad_out.ptr() + nc * Ho * Wo;
    T* x = gx.ptr() + nc * H * W;
    for (int64_t oy = 0; oy < Ho; ++oy) {
      T* dst = x + (oy / factor) * W;
      const T* src = g + oy * Wo;
      for (int64_t ox = 0; ox < Wo; ++ox) dst[ox / factor] += src[ox];
    }
  }
  return gx;
}

template <typename T>
BasicTensor<T> upsample_bilinear(const BasicTensor<T>& input, int64_t out_h,
                                 int64_t out_w) {
  require_rank4(input.shape(), "upsample_bilinear");
  const int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2),
                W = input.dim(3);
  if (out_h < H || out_w < W)
    throw ValueError("upsample_bilinear: output must not be smaller than input");
  const auto ty = bilinear_taps(H, out_h);
  const auto tx = bilinear_taps(W, out_w);
  BasicTensor<T> out({N, C, out_h, out_w});
  std::vector<T> rowbuf(static_cast<size_t>(out_w));
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const T* x = input.ptr() + nc * H * W;
    T* y = out.ptr() + nc * out_h * out_w;
    for (int64_t oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[static_cast<size_t>(oy)];
      const T* r0 = x + a.i0 * W;
      const T* r1 = x + a.i1 * W;
      const T wy0 = static_cast<T>(a.w0), wy1 = static_cast<T>(a.w1);
      T* dst = y + oy * out_w;
      for (int64_t ox = 0; ox < out_w; ++ox) {
        const auto& b = tx[static_cast<size_t>(ox)];
        const T wx0 = static_cast<T>(b.w0), wx1 = static_cast<T>(b.w1);
        dst[ox] = wy0 * (wx0 * r0[b.i0] + wx1 * r0[b.i1]) +
                  wy1 * (wx0 * r1[b.i0] + wx1 * r1[b.i1]);
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> upsample_bilinear_backward(const Shape& input_shape,
                                          const BasicTensor<T>& grad_out) {
  const int64_t N = input_shape[0], C = input_shape[1], H = input_shape[2],
                W = input_shape[3];
  const int64_t out_h = grad_out.dim(2), out_w = grad_out.dim(3);
  const auto ty = bilinear_taps(H, out_h);
  const auto tx = bilinear_taps(W, out_w);
  BasicTensor<T> gx(input_shape);
  for (int64_t nc = 0; nc < N * C; ++nc) {
    T* x = gx.ptr() + nc * H * W;
    const T* g = grad_out.ptr() + nc * out_h * out_w;
    for (int64_t oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[static_cast<size_t>(oy)];
      T* r0 = x + a.i0 * W;
      T* r1 = x + a.i1 * W;
      const T wy0 = static_cast<T>(a.w0), wy1 = static_cast<T>(a.w1);
      const T* src = g + oy * out_w;
      for (int64_t ox = 0; ox < out_w; ++ox) {
        const auto& b = tx[static_cast<size_t>(ox)];
        const T wx0 = static_cast<T>(b.w0), wx1 = static_cast<T>(b.w1);
        const T v = src[ox];
        r0[b.i0] += wy0 * wx0 * v;
        r0[b.i1] += wy0 * wx1 * v;
        r1[b.i0] += wy1 * wx0 * v;
        r1[b.i1] += wy1 * wx1 * v;
      }
    }
  }
  return gx;
}

template <typename T>
BasicTensor<T> concat_channels(const std::vector<const BasicTensor<T>*>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& s0 = parts.front()->shape();
  require_rank4(s0, "concat_channels");
  int64_t C = 0;
  for (const auto* p : parts) {
    const Shape& s = p->shape();
    if (s.size() != 4 || s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3])
      throw ShapeError("concat_channels: mismatched shapes " +
                       shape_string(s0) + " vs " + shape_string(s));
    C += s[1];
  }
  const int64_t N = s0[0], HW = s0[2] * s0[3];
  BasicTensor<T> out({N, C, s0[2], s0[3]});
  for (int64_t n = 0; n < N; ++n) {
    T* dst = out.ptr() + n * C * HW;
    for (const auto* p : parts) {
      const int64_t ci = p->dim(1);
      const T* src = p->ptr() + n * ci * HW;
      dst = std::copy(src, src + ci * HW, dst);
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& input, int64_t begin,
                              int64_t count) {
  const int64_t N = input.dim(0), C = input.dim(1),
                HW = input.dim(2) * input.dim(3);
  BasicTensor<T> out({N, count, input.dim(2), input.dim(3)});
  for (int64_t n = 0; n < N; ++n) {
    const T* src = input.ptr() + (n * C + begin) * HW;
    std::copy(src, src + count * HW, out.ptr() + n * count * HW);
  }
  return out;
}

template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& logits) {
  require_rank4(logits.shape(), "softmax_channels");
  const int64_t N = logits.dim(0), C = logits.dim(1),
                HW = logits.dim(2) * logits.dim(3);
  BasicTensor<T> out(logits.shape());
  std::vector<T> mx(static_cast<size_t>(HW)), sum(static_cast<size_t>(HW));
  for (int64_t n = 0; n < N; ++n) {
    const T* x = logits.ptr() + n * C * HW;
    T* y = out.ptr() + n * C * HW;
    std::copy(x, x + HW, mx.begin());
    for (int64_t c = 1; c < C; ++c)
      for (int64_t i = 0; i < HW; ++i)
        mx[static_cast<size_t>(i)] = std::max(mx[static_cast<size_t>(i)], x[c * HW + i]);
    std::fill(sum.begin(), sum.end(), T{0});
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < HW; ++i) {
        T e = std::exp(x[c * HW + i] - mx[static_cast<size_t>(i)]);
        y[c * HW + i] = e;
        sum[static_cast<size_t>(i)] += e;
      }
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < HW; ++i) y[c * HW + i] /= sum[static_cast<size_t>(i)];
  }
  return out;
}

template <typename T>
BasicTensor<T> softmax_channels_backward(const BasicTensor<T>& probs,
                                         const BasicTensor<T>& grad_out) {
  const int64_t N = probs.dim(0), C = probs.dim(1),
                HW = probs.dim(2) * probs.dim(3);
  BasicTensor<T> gx(probs.shape());
  std::vector<T> dot(static_cast<size_t>(HW));
  for (int64_t n = 0; n < N; ++n) {
    const T* y = probs.ptr() + n * C * HW;
    const T* g = grad_out.ptr() + n * C * HW;
    T* o = gx.ptr() + n * C * HW;
    std::fill(dot.begin(), dot.end(), T{0});
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < HW; ++i) dot[static_cast<size_t>(i)] += g[c * HW + i] * y[c * HW + i];
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < HW; ++i)
        o[c * HW + i] = y[c * HW + i] * (g[c * HW + i] - dot[static_cast<size_t>(i)]);
  }
  return gx;
}

#define FPNSEG_INSTANTIATE(T)                                                  \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, \
                                 const BasicTensor<T>*, int64_t, int64_t);     \
  template void conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&,  \
                                const BasicTensor<T>&, int64_t, int64_t,       \
                                BasicTensor<T>*, BasicTensor<T>*,              \
                                BasicTensor<T>*);                              \
  template BasicTensor<T> batch_norm2d(                                        \
      const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,     \
      BasicTensor<T>&, BasicTensor<T>&, Mode, double, double, BatchNormStats*); \
  template void batch_norm2d_backward(                                         \
      const BasicTensor<T>&, const BasicTensor<T>&, const BatchNormStats&,     \
      Mode, const BasicTensor<T>&, BasicTensor<T>*, BasicTensor<T>*,           \
      BasicTensor<T>*);                                                        \
  template BasicTensor<T> relu(const BasicTensor<T>&);                         \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&,                 \
                                        const BasicTensor<T>&);                \
  template BasicTensor<T> max_pool2d(const BasicTensor<T>&, int64_t, int64_t,  \
                                     int64_t, std::vector<int64_t>*);          \
  template BasicTensor<T> max_pool2d_backward(                                 \
      const Shape&, const std::vector<int64_t>&, const BasicTensor<T>&);       \
  template BasicTensor<T> upsample_nearest(const BasicTensor<T>&, int64_t);    \
  template BasicTensor<T> upsample_nearest_backward(const BasicTensor<T>&,     \
                                                    int64_t);                  \
  template BasicTensor<T> upsample_bilinear(const BasicTensor<T>&, int64_t,    \
                                            int64_t);                          \
  template BasicTensor<T> upsample_bilinear_backward(const Shape&,             \
                                                     const BasicTensor<T>&);   \
  template BasicTensor<T> concat_channels(                                     \
      const std::vector<const BasicTensor<T>*>&);                              \
  template BasicTensor<T> slice_channels(const BasicTensor<T>&, int64_t,       \
                                         int64_t);                             \
  template BasicTensor<T> softmax_channels(const BasicTensor<T>&);             \
  template BasicTensor<T> softmax_channels_backward(const BasicTensor<T>&,     \
                                                    const BasicTensor<T>&);

FPNSEG_INSTANTIATE(float)
FPNSEG_INSTANTIATE(double)
#undef FPNSEG_INSTANTIATE

}  // namespace fpnseg::kernels
