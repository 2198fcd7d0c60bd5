#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "fpnseg/autograd.hpp"
#include "fpnseg/mask_codec.hpp"

namespace fpnseg {

struct LossWeights {
  double alpha = 1.0;
  double beta = 0.5;
  std::vector<double> class_weights = std::vector<double>(kNumClasses, 1.0);
  // Added to each soft-Jaccard denominator.
  double jaccard_epsilon = 1e-7;
  // Lower clamp on probabilities inside the log.
  double ce_epsilon = 1e-7;

  void validate() const;
};

// J = (1/n) sum_c w_c sum_i y*p / (y + p - y*p + eps), n = N*H*W.
template <typename T>
Var<T> soft_jaccard(const Var<T>& probs, const BasicTensor<T>& target,
                    const LossWeights& weights);

// H = -(1/n) sum_i sum_c y * log(clamp(p, eps, 1)).
template <typename T>
Var<T> cross_entropy(const Var<T>& probs, const BasicTensor<T>& target,
                     double epsilon);

// alpha * H + beta * (1 - J) on softmax(logits).
template <typename T>
Var<T> combined_loss(const Var<T>& logits, const BasicTensor<T>& target,
                     const LossWeights& weights);

double soft_jaccard_value(const Tensor& probs, const Tensor& target,
                          const LossWeights& weights = {});
double cross_entropy_value(const Tensor& probs, const Tensor& target,
                           double epsilon = 1e-7);

// Per-class intersection and union pixel counts, summed over any number of
// label-map pairs.
struct ConfusionCounts {
  std::array<int64_t, kNumClasses> intersection{};
  std::array<int64_t, kNumClasses> union_{};

  void add(const LabelMap& pred, const LabelMap& truth);
  ConfusionCounts& operator+=(const ConfusionCounts& o);
};

struct IoUReport {
  // nullopt when the class occurs in neither prediction nor truth.
  std::array<std::optional<double>, kNumClasses> per_class{};
  // Mean over defined classes; NaN when none is defined.
  double mean = 0.0;

  static IoUReport from_counts(const ConfusionCounts& counts);
};

IoUReport eval_iou(const LabelMap& pred, const LabelMap& truth);

}  // namespace fpnseg
