#pragma once

// Reverse-mode differentiation over a dynamically recorded graph.
//
// Every op returns a Var whose Node holds the forward value and, when any
// input requires a gradient, a closure that pushes the output gradient back
// to its parents. backward() sweeps the graph in reverse topological order.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "fpnseg/kernels.hpp"
#include "fpnseg/rng.hpp"
#include "fpnseg/tensor.hpp"

namespace fpnseg {

template <typename T>
struct Node {
  BasicTensor<T> value;
  BasicTensor<T> grad;
  bool requires_grad = false;
  std::string name;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var leaf(BasicTensor<T> value, bool requires_grad = false,
                  std::string name = {}) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->name = std::move(name);
    return Var(std::move(n));
  }

  bool defined() const noexcept { return node_ != nullptr; }
  const BasicTensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  const std::shared_ptr<Node<T>>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <typename T>
using GradMap = std::map<std::string, BasicTensor<T>>;

// Gradients of a scalar loss for every named leaf reachable from it.
template <typename T>
GradMap<T> backward(const Var<T>& loss);

// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// When enabled, every op result is checked for NaN/Inf. Defaults to on in
// debug builds.
void set_finite_checks(bool enabled);
bool finite_checks();

// Records the discrete choices (ReLU signs, max-pool winners) made by the
// forward passes run while the trace is alive on this thread. Two passes with
// equal signatures took the same piecewise-smooth branch.
class BranchTrace {
 public:
  BranchTrace();
  ~BranchTrace();
  BranchTrace(const BranchTrace&) = delete;
  BranchTrace& operator=(const BranchTrace&) = delete;

  uint64_t signature() const noexcept { return signature_; }
  void record(uint64_t value);
  static BranchTrace* active();

 private:
  uint64_t signature_ = 0x6a09e667f3bcc909ULL;
  BranchTrace* previous_;
};

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias,
              int64_t stride, int64_t padding);

// Running statistics are updated in place in train mode.
template <typename T>
Var<T> batch_norm2d(const Var<T>& input, const Var<T>& gamma,
                    const Var<T>& beta, BasicTensor<T>& running_mean,
                    BasicTensor<T>& running_var, Mode mode,
                    double momentum = 0.1, double epsilon = 1e-5);

template <typename T>
Var<T> relu(const Var<T>& input);

template <typename T>
Var<T> max_pool2d(const Var<T>& input, int64_t kernel, int64_t stride,
                  int64_t padding = 0);

template <typename T>
Var<T> upsample_nearest(const Var<T>& input, int64_t factor);

template <typename T>
Var<T> upsample_bilinear(const Var<T>& input, int64_t out_h, int64_t out_w);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts);

template <typename T>
Var<T> softmax_channels(const Var<T>& logits);

// Zeroes whole (n, c) planes with probability p and scales survivors by
// 1 / (1 - p). Identity in eval mode or when p == 0.
template <typename T>
Var<T> spatial_dropout(const Var<T>& input, double p, Mode mode,
                       RngStream& rng);

template <typename T>
Var<T> sum(const Var<T>& input);

// a * x + b for a scalar-valued or any-shaped x.
template <typename T>
Var<T> affine(const Var<T>& input, double scale, double shift = 0.0);

namespace detail {

// Builds a result node; parents and the backward closure are kept only when
// some parent requires a gradient and recording is enabled.
template <typename T>
Var<T> make_result(BasicTensor<T> value,
                   std::vector<std::shared_ptr<Node<T>>> parents,
                   std::function<void(Node<T>&)> backward_fn);

template <typename T>
void accumulate(Node<T>& node, BasicTensor<T> grad);

}  // namespace detail

}  // namespace fpnseg
