#pragma once

// Reference implementations used only to check the library. They favour
// the most literal formulation over speed.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "fpnseg/mask_codec.hpp"
#include "fpnseg/tensor.hpp"

namespace fpnseg::testing {

template <typename T = float>
BasicTensor<T> random_tensor(const Shape& shape, uint64_t seed, double lo = -1.0,
                             double hi = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  BasicTensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(dist(gen));
  return t;
}

inline LabelMap random_labels(int64_t h, int64_t w, uint64_t seed, int classes = kNumClasses) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> dist(0, classes - 1);
  LabelMap m(h, w);
  for (auto& v : m.labels) v = static_cast<uint8_t>(dist(gen));
  return m;
}

// out[n,o,y,x] = b[o] + sum_{c,i,j} w[o,c,i,j] * in[n,c,y*s+i-p,x*s+j-p].
template <typename T>
BasicTensor<T> conv2d_direct(const BasicTensor<T>& in, const BasicTensor<T>& w,
                             const BasicTensor<T>* b, int64_t s, int64_t p) {
  const int64_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const int64_t O = w.dim(0), K = w.dim(2);
  const int64_t Ho = (H + 2 * p - K) / s + 1, Wo = (W + 2 * p - K) / s + 1;
  BasicTensor<T> out({N, O, Ho, Wo});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t o = 0; o < O; ++o)
      for (int64_t y = 0; y < Ho; ++y)
        for (int64_t x = 0; x < Wo; ++x) {
          double acc = b ? static_cast<double>((*b)[o]) : 0.0;
          for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < K; ++i)
              for (int64_t j = 0; j < K; ++j) {
                const int64_t iy = y * s + i - p, ix = x * s + j - p;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += static_cast<double>(w.at(o, c, i, j)) *
                       static_cast<double>(in.at(n, c, iy, ix));
              }
          out.at(n, o, y, x) = static_cast<T>(acc);
        }
  return out;
}

// Scans each window; out-of-range taps are ignored.
template <typename T>
BasicTensor<T> max_pool_scan(const BasicTensor<T>& in, int64_t k, int64_t s, int64_t p) {
  const int64_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const int64_t Ho = (H + 2 * p - k) / s + 1, Wo = (W + 2 * p - k) / s + 1;
  BasicTensor<T> out({N, C, Ho, Wo});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t y = 0; y < Ho; ++y)
        for (int64_t x = 0; x < Wo; ++x) {
          T best = -std::numeric_limits<T>::infinity();
          for (int64_t i = 0; i < k; ++i)
            for (int64_t j = 0; j < k; ++j) {
              const int64_t iy = y * s + i - p, ix = x * s + j - p;
              if (iy >= 0 && iy < H && ix >= 0 && ix < W)
                best = std::max(best, in.at(n, c, iy, ix));
            }
          out.at(n, c, y, x) = best;
        }
  return out;
}

// Two-pass mean / biased variance per channel.
template <typename T>
void channel_moments(const BasicTensor<T>& in, std::vector<double>& mean,
                     std::vector<double>& var) {
  const int64_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const double m = static_cast<double>(N * H * W);
  mean.assign(static_cast<size_t>(C), 0.0);
  var.assign(static_cast<size_t>(C), 0.0);
  for (int64_t c = 0; c < C; ++c) {
    double s = 0;
    for (int64_t n = 0; n < N; ++n)
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) s += in.at(n, c, y, x);
    const double mu = s / m;
    double q = 0;
    for (int64_t n = 0; n < N; ++n)
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
          const double d = in.at(n, c, y, x) - mu;
          q += d * d;
        }
    mean[static_cast<size_t>(c)] = mu;
    var[static_cast<size_t>(c)] = q / m;
  }
}

// Bilinear resize with pixel centres at half-integers: output pixel i maps
// to source coordinate (i + 1/2) * in/out - 1/2, clamped below at 0; the
// upper neighbour is clamped to the last row/column.
template <typename T>
BasicTensor<T> bilinear_reference(const BasicTensor<T>& in, int64_t Ho, int64_t Wo) {
  const int64_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  BasicTensor<T> out({N, C, Ho, Wo});
  auto coord = [](int64_t i, int64_t n_in, int64_t n_out) {
    double src = (static_cast<double>(i) + 0.5) * static_cast<double>(n_in) /
                     static_cast<double>(n_out) - 0.5;
    return std::max(src, 0.0);
  };
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t y = 0; y < Ho; ++y)
        for (int64_t x = 0; x < Wo; ++x) {
          const double sy = coord(y, H, Ho), sx = coord(x, W, Wo);
          const auto y0 = static_cast<int64_t>(sy), x0 = static_cast<int64_t>(sx);
          const int64_t y1 = std::min(y0 + 1, H - 1), x1 = std::min(x0 + 1, W - 1);
          const double ly = sy - static_cast<double>(y0), lx = sx - static_cast<double>(x0);
          const double v = (1 - ly) * ((1 - lx) * in.at(n, c, y0, x0) + lx * in.at(n, c, y0, x1)) +
                           ly * ((1 - lx) * in.at(n, c, y1, x0) + lx * in.at(n, c, y1, x1));
          out.at(n, c, y, x) = static_cast<T>(v);
        }
  return out;
}

template <typename T>
BasicTensor<T> softmax_reference(const BasicTensor<T>& z) {
  const int64_t N = z.dim(0), C = z.dim(1), H = z.dim(2), W = z.dim(3);
  BasicTensor<T> out(z.shape());
  for (int64_t n = 0; n < N; ++n)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        double denom = 0;
        for (int64_t c = 0; c < C; ++c) denom += std::exp(static_cast<double>(z.at(n, c, y, x)));
        for (int64_t c = 0; c < C; ++c)
          out.at(n, c, y, x) = static_cast<T>(std::exp(static_cast<double>(z.at(n, c, y, x))) / denom);
      }
  return out;
}

// Per-class intersection / union from explicit pixel sets.
inline std::array<std::pair<int64_t, int64_t>, kNumClasses> set_counts(
    const std::vector<std::pair<const LabelMap*, const LabelMap*>>& pairs) {
  std::array<std::pair<int64_t, int64_t>, kNumClasses> out{};
  for (int c = 0; c < kNumClasses; ++c) {
    int64_t inter = 0, uni = 0;
    for (const auto& [pred, truth] : pairs)
      for (size_t i = 0; i < pred->labels.size(); ++i) {
        const bool a = pred->labels[i] == c, b = truth->labels[i] == c;
        inter += a && b;
        uni += a || b;
      }
    out[static_cast<size_t>(c)] = {inter, uni};
  }
  return out;
}

// Plain scalar Adam with the learning-rate schedule lr0 / (1 + decay * t).
struct AdamReference {
  double lr0, decay, b1, b2, eps;
  std::vector<double> m, v;
  int64_t t = 0;

  void step(std::vector<double>& w, const std::vector<double>& g) {
    if (m.empty()) {
      m.assign(w.size(), 0.0);
      v.assign(w.size(), 0.0);
    }
    ++t;
    const double lr = lr0 / (1.0 + decay * static_cast<double>(t));
    for (size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(b1, static_cast<double>(t)));
      const double vh = v[i] / (1 - std::pow(b2, static_cast<double>(t)));
      w[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
};

// HSV conversion written after the hexcone definition in colorsys style.
inline std::array<double, 3> hsv_reference(double r, double g, double b) {
  const double maxc = std::max({r, g, b}), minc = std::min({r, g, b});
  if (minc == maxc) return {0.0, 0.0, maxc};
  const double s = (maxc - minc) / maxc;
  const double rc = (maxc - r) / (maxc - minc);
  const double gc = (maxc - g) / (maxc - minc);
  const double bc = (maxc - b) / (maxc - minc);
  double h;
  if (r == maxc)
    h = bc - gc;
  else if (g == maxc)
    h = 2.0 + rc - bc;
  else
    h = 4.0 + gc - rc;
  h = std::fmod(h / 6.0 + 1.0, 1.0);
  return {h * 360.0, s, maxc};
}

inline std::array<double, 3> rgb_reference(double h_deg, double s, double v) {
  if (s == 0.0) return {v, v, v};
  const double h = h_deg / 360.0;
  const int i = static_cast<int>(h * 6.0) % 6;
  const double f = h * 6.0 - std::floor(h * 6.0);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

}  // namespace fpnseg::testing
