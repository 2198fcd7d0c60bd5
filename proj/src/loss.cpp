#include "fpnseg/loss.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace fpnseg {

void LossWeights::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0))
    throw ValueError("loss weights alpha and beta must be non-negative");
  if (class_weights.size() != static_cast<size_t>(kNumClasses))
    throw ValueError("expected " + std::to_string(kNumClasses) +
                     " class weights, got " +
                     std::to_string(class_weights.size()));
  for (double w : class_weights)
    if (!(w >= 0.0)) throw ValueError("class weights must be non-negative");
  if (!(jaccard_epsilon > 0.0) || !(ce_epsilon > 0.0))
    throw ValueError("loss smoothing epsilons must be positive");
}

namespace {

template <typename T>
void check_pair(const BasicTensor<T>& probs, const BasicTensor<T>& target,
                const char* op) {
  if (probs.rank() != 4)
    throw ShapeError(std::string(op) + ": expected [N,C,H,W] probabilities, got " +
                     shape_string(probs.shape()));
  probs.require_same_shape(target, op);
  for (T v : target.data())
    if (v != T{0} && v != T{1})
      throw ValueError(std::string(op) + ": target must be binary");
}

}  // namespace

template <typename T>
Var<T> soft_jaccard(const Var<T>& probs, const BasicTensor<T>& target,
                    const LossWeights& weights) {
  weights.validate();
  check_pair(probs.value(), target, "soft_jaccard");
  const int64_t N = probs.shape()[0], C = probs.shape()[1],
                HW = probs.shape()[2] * probs.shape()[3];
  if (C != kNumClasses)
    throw ShapeError("soft_jaccard: expected " + std::to_string(kNumClasses) +
                     " channels");
  const double n = static_cast<double>(N * HW);
  const double eps = weights.jaccard_epsilon;
  const auto& p = probs.value();
  double total = 0.0;
  for (int64_t b = 0; b < N; ++b)
    for (int64_t c = 0; c < C; ++c) {
      const double w = weights.class_weights[static_cast<size_t>(c)];
      double s = 0.0;
      for (int64_t i = 0; i < HW; ++i) {
        const int64_t k = (b * C + c) * HW + i;
        const double y = target[k], q = p[k];
        s += y * q / (y + q - y * q + eps);
      }
      total += w * s;
    }
  BasicTensor<T> out({1}, static_cast<T>(total / n));
  return detail::make_result<T>(
      std::move(out), {probs.node()},
      [target, weights, n, N, C, HW](Node<T>& self) {
        auto& x = *self.parents[0];
        const double upstream = static_cast<double>(self.grad[0]);
        const double eps = weights.jaccard_epsilon;
        BasicTensor<T> g(x.value.shape());
        for (int64_t b = 0; b < N; ++b)
          for (int64_t c = 0; c < C; ++c) {
            const double scale =
                upstream * weights.class_weights[static_cast<size_t>(c)] / n;
            for (int64_t i = 0; i < HW; ++i) {
              const int64_t k = (b * C + c) * HW + i;
              const double y = target[k], q = x.value[k];
              const double d = y + q - y * q + eps;
              g[k] = static_cast<T>(scale * (y * d - y * q * (1.0 - y)) / (d * d));
            }
          }
        detail::accumulate(x, std::move(g));
      });
}

template <typename T>
Var<T> cross_entropy(const Var<T>& probs, const BasicTensor<T>& target,
                     double epsilon) {
  if (!(epsilon > 0.0)) throw ValueError("cross_entropy: epsilon must be > 0");
  check_pair(probs.value(), target, "cross_entropy");
  const int64_t N = probs.shape()[0], HW = probs.shape()[2] * probs.shape()[3];
  const double n = static_cast<double>(N * HW);
  const auto& p = probs.value();
  double total = 0.0;
  for (int64_t k = 0; k < p.numel(); ++k) {
    const double y = target[k];
    if (y == 0.0) continue;
    const double q = std::min(1.0, std::max(epsilon, static_cast<double>(p[k])));
    total -= y * std::log(q);
  }
  BasicTensor<T> out({1}, static_cast<T>(total / n));
  return detail::make_result<T>(
      std::move(out), {probs.node()}, [target, epsilon, n](Node<T>& self) {
        auto& x = *self.parents[0];
        const double upstream = static_cast<double>(self.grad[0]);
        BasicTensor<T> g(x.value.shape());
        for (int64_t k = 0; k < g.numel(); ++k) {
          const double y = target[k], q = x.value[k];
          // The clamp is flat outside [eps, 1].
          if (y != 0.0 && q > epsilon && q <= 1.0)
            g[k] = static_cast<T>(-upstream * y / (n * q));
        }
        detail::accumulate(x, std::move(g));
      });
}

template <typename T>
Var<T> combined_loss(const Var<T>& logits, const BasicTensor<T>& target,
                     const LossWeights& weights) {
  weights.validate();
  Var<T> probs = softmax_channels(logits);
  Var<T> h = cross_entropy(probs, target, weights.ce_epsilon);
  Var<T> j = soft_jaccard(probs, target, weights);
  return add(affine(h, weights.alpha, 0.0),
             affine(j, -weights.beta, weights.beta));
}

double soft_jaccard_value(const Tensor& probs, const Tensor& target,
                          const LossWeights& weights) {
  NoGradGuard guard;
  return soft_jaccard(Var<float>::leaf(probs), target, weights).value()[0];
}

double cross_entropy_value(const Tensor& probs, const Tensor& target,
                           double epsilon) {
  NoGradGuard guard;
  return cross_entropy(Var<float>::leaf(probs), target, epsilon).value()[0];
}

void ConfusionCounts::add(const LabelMap& pred, const LabelMap& truth) {
  if (pred.height != truth.height || pred.width != truth.width)
    throw ShapeError("eval_iou: prediction is " + std::to_string(pred.height) +
                     "x" + std::to_string(pred.width) + ", truth is " +
                     std::to_string(truth.height) + "x" +
                     std::to_string(truth.width));
  pred.validate();
  truth.validate();
  for (size_t i = 0; i < pred.labels.size(); ++i) {
    const uint8_t a = pred.labels[i], b = truth.labels[i];
    if (a == b) {
      ++intersection[a];
      ++union_[a];
    } else {
      ++union_[a];
      ++union_[b];
    }
  }
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  for (int c = 0; c < kNumClasses; ++c) {
    intersection[static_cast<size_t>(c)] += o.intersection[static_cast<size_t>(c)];
    union_[static_cast<size_t>(c)] += o.union_[static_cast<size_t>(c)];
  }
  return *this;
}

IoUReport IoUReport::from_counts(const ConfusionCounts& counts) {
  IoUReport r;
  double s = 0.0;
  int defined = 0;
  for (size_t c = 0; c < static_cast<size_t>(kNumClasses); ++c) {
    if (counts.union_[c] == 0) continue;
    double v = static_cast<double>(counts.intersection[c]) /
               static_cast<double>(counts.union_[c]);
    r.per_class[c] = v;
    s += v;
    ++defined;
  }
  r.mean = defined ? s / defined : std::numeric_limits<double>::quiet_NaN();
  return r;
}

IoUReport eval_iou(const LabelMap& pred, const LabelMap& truth) {
  ConfusionCounts counts;
  counts.add(pred, truth);
  return IoUReport::from_counts(counts);
}

#define FPNSEG_INSTANTIATE(T)                                                 \
  template Var<T> soft_jaccard(const Var<T>&, const BasicTensor<T>&,          \
                               const LossWeights&);                           \
  template Var<T> cross_entropy(const Var<T>&, const BasicTensor<T>&, double); \
  template Var<T> combined_loss(const Var<T>&, const BasicTensor<T>&,         \
                                const LossWeights&);

FPNSEG_INSTANTIATE(float)
FPNSEG_INSTANTIATE(double)
#undef FPNSEG_INSTANTIATE

}  // namespace fpnseg
