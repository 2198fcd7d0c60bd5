#pragma once

// Tensor-level forward and backward kernels for the network primitives.
// These are stateless; the autograd layer wires them into a graph.

#include <cstdint>
#include <vector>

#include "fpnseg/tensor.hpp"

namespace fpnseg {

enum class Mode { Train, Eval };

namespace kernels {

int64_t conv_out_size(int64_t in, int64_t kernel, int64_t stride,
                      int64_t padding);

// Cross-correlation, NCHW input, OIHW weight. bias may be null.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>* bias, int64_t stride,
                      int64_t padding);

// Any of the output pointers may be null to skip that gradient.
template <typename T>
void conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                     const BasicTensor<T>& grad_out, int64_t stride,
                     int64_t padding, BasicTensor<T>* grad_input,
                     BasicTensor<T>* grad_weight, BasicTensor<T>* grad_bias);

// Per-channel statistics used for normalization. In train mode these are
// the batch mean and 1/sqrt(biased var + eps); in eval mode the running ones.
struct BatchNormStats {
  std::vector<double> mean;
  std::vector<double> invstd;
};

template <typename T>
BasicTensor<T> batch_norm2d(const BasicTensor<T>& input,
                            const BasicTensor<T>& gamma,
                            const BasicTensor<T>& beta,
                            BasicTensor<T>& running_mean,
                            BasicTensor<T>& running_var, Mode mode,
                            double momentum, double epsilon,
                            BatchNormStats* stats);

template <typename T>
void batch_norm2d_backward(const BasicTensor<T>& input,
                           const BasicTensor<T>& gamma,
                           const BatchNormStats& stats, Mode mode,
                           const BasicTensor<T>& grad_out,
                           BasicTensor<T>* grad_input,
                           BasicTensor<T>* grad_gamma,
                           BasicTensor<T>* grad_beta);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

// grad is passed only where input > 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input,
                             const BasicTensor<T>& grad_out);

// argmax receives, per output element, the flat offset of the winning input
// element within its (n, c) plane, or -1 if the window was all padding.
template <typename T>
BasicTensor<T> max_pool2d(const BasicTensor<T>& input, int64_t kernel,
                          int64_t stride, int64_t padding,
                          std::vector<int64_t>* argmax);

template <typename T>
BasicTensor<T> max_pool2d_backward(const Shape& input_shape,
                                   const std::vector<int64_t>& argmax,
                                   const BasicTensor<T>& grad_out);

template <typename T>
BasicTensor<T> upsample_nearest(const BasicTensor<T>& input, int64_t factor);

template <typename T>
BasicTensor<T> upsample_nearest_backward(const BasicTensor<T>& grad_out,
                                         int64_t factor);

// Half-pixel convention: src = (i + 0.5) * in / out - 0.5, clamped at 0.
template <typename T>
BasicTensor<T> upsample_bilinear(const BasicTensor<T>& input, int64_t out_h,
                                 int64_t out_w);

template <typename T>
BasicTensor<T> upsample_bilinear_backward(const Shape& input_shape,
                                          const BasicTensor<T>& grad_out);

template <typename T>
BasicTensor<T> concat_channels(const std::vector<const BasicTensor<T>*>& parts);

// Inverse of concat_channels: slice channels [begin, begin + count).
template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& input, int64_t begin,
                              int64_t count);

template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& logits);

template <typename T>
BasicTensor<T> softmax_channels_backward(const BasicTensor<T>& probs,
                                         const BasicTensor<T>& grad_out);

}  // namespace kernels
}  // namespace fpnseg
