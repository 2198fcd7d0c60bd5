#include "fpnseg/autograd.hpp"

#include <unordered_set>

namespace fpnseg {

namespace {
thread_local bool g_grad_enabled = true;
thread_local BranchTrace* g_trace = nullptr;
#ifdef NDEBUG
bool g_finite_checks = false;
#else
bool g_finite_checks = true;
#endif

template <typename T>
uint64_t hash_signs(const BasicTensor<T>& t) {
  uint64_t h = 1469598103934665603ULL;
  for (T v : t.data()) {
    h ^= v > T{0} ? 1u : 0u;
    h *= 1099511628211ULL;
  }
  return h;
}

uint64_t hash_indices(const std::vector<int64_t>& idx) {
  uint64_t h = 1469598103934665603ULL;
  for (int64_t v : idx) {
    h ^= static_cast<uint64_t>(v);
    h *= 1099511628211ULL;
  }
  return h;
}
}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks() { return g_finite_checks; }

BranchTrace::BranchTrace() : previous_(g_trace) { g_trace = this; }
BranchTrace::~BranchTrace() { g_trace = previous_; }
void BranchTrace::record(uint64_t value) {
  signature_ = mix64(signature_ ^ value);
}
BranchTrace* BranchTrace::active() { return g_trace; }

namespace detail {

template <typename T>
Var<T> make_result(BasicTensor<T> value,
                   std::vector<std::shared_ptr<Node<T>>> parents,
                   std::function<void(Node<T>&)> backward_fn) {
  if (g_finite_checks && !value.all_finite())
    throw ValueError("non-finite value produced by op, shape " +
                     shape_string(value.shape()));
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled)
    for (const auto& p : parents)
      if (p && p->requires_grad) needs = true;
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward_fn);
  }
  return Var<T>(std::move(node));
}

template <typename T>
void accumulate(Node<T>& node, BasicTensor<T> grad) {
  if (!node.requires_grad) return;
  if (node.grad.empty())
    node.grad = std::move(grad);
  else
    node.grad += grad;
}

}  // namespace detail

using detail::accumulate;
using detail::make_result;

template <typename T>
GradMap<T> backward(const Var<T>& loss) {
  if (!loss.defined() || loss.value().numel() != 1)
    throw ShapeError("backward: loss must be a scalar, got shape " +
                     (loss.defined() ? shape_string(loss.shape()) : "()"));
  GradMap<T> grads;
  if (!loss.requires_grad()) return grads;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node<T>* p = n->parents[i++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (Node<T>* n : order) n->grad = BasicTensor<T>();
  loss.node()->grad = BasicTensor<T>::full(loss.shape(), T{1});

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->parents.empty()) continue;
    if (!n->grad.empty() && n->backward) n->backward(*n);
    n->grad = BasicTensor<T>();
  }
  for (Node<T>* n : order) {
    if (!n->parents.empty() || n->name.empty()) continue;
    BasicTensor<T> g = n->grad.empty() ? BasicTensor<T>::zeros_like(n->value)
                                       : std::move(n->grad);
    n->grad = BasicTensor<T>();
    auto [pos, inserted] = grads.emplace(n->name, std::move(g));
    if (!inserted) throw ValueError("backward: duplicate leaf name " + n->name);
  }
  return grads;
}

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias,
              int64_t stride, int64_t padding) {
  auto out = kernels::conv2d(input.value(), weight.value(),
                             bias.defined() ? &bias.value() : nullptr, stride,
                             padding);
  std::vector<std::shared_ptr<Node<T>>> parents{input.node(), weight.node()};
  if (bias.defined()) parents.push_back(bias.node());
  return make_result<T>(
      std::move(out), std::move(parents), [stride, padding](Node<T>& self) {
        auto& x = *self.parents[0];
        auto& w = *self.parents[1];
        Node<T>* b = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
        BasicTensor<T> gx, gw, gb;
        kernels::conv2d_backward(x.value, w.value, self.grad, stride, padding,
                                 x.requires_grad ? &gx : nullptr,
                                 w.requires_grad ? &gw : nullptr,
                                 b && b->requires_grad ? &gb : nullptr);
        if (x.requires_grad) accumulate(x, std::move(gx));
        if (w.requires_grad) accumulate(w, std::move(gw));
        if (b && b->requires_grad) accumulate(*b, std::move(gb));
      });
}

template <typename T>
Var<T> batch_norm2d(const Var<T>& input, const Var<T>& gamma,
                    const Var<T>& beta, BasicTensor<T>& running_mean,
                    BasicTensor<T>& running_var, Mode mode, double momentum,
                    double epsilon) {
  kernels::BatchNormStats stats;
  auto out = kernels::batch_norm2d(input.value(), gamma.value(), beta.value(),
                                   running_mean, running_var, mode, momentum,
                                   epsilon, &stats);
  return make_result<T>(
      std::move(out), {input.node(), gamma.node(), beta.node()},
      [stats = std::move(stats), mode](Node<T>& self) {
        auto& x = *self.parents[0];
        auto& g = *self.parents[1];
        auto& b = *self.parents[2];
        BasicTensor<T> gx, gg, gb;
        kernels::batch_norm2d_backward(x.value, g.value, stats, mode,
                                       self.grad,
                                       x.requires_grad ? &gx : nullptr,
                                       g.requires_grad ? &gg : nullptr,
                                       b.requires_grad ? &gb : nullptr);
        if (x.requires_grad) accumulate(x, std::move(gx));
        if (g.requires_grad) accumulate(g, std::move(gg));
        if (b.requires_grad) accumulate(b, std::move(gb));
      });
}

template <typename T>
Var<T> relu(const Var<T>& input) {
  if (auto* trace = BranchTrace::active()) trace->record(hash_signs(input.value()));
  return make_result<T>(kernels::relu(input.value()), {input.node()},
                        [](Node<T>& self) {
                          auto& x = *self.parents[0];
                          accumulate(x, kernels::relu_backward(x.value, self.grad));
                        });
}

template <typename T>
Var<T> max_pool2d(const Var<T>& input, int64_t kernel, int64_t stride,
                  int64_t padding) {
  std::vector<int64_t> argmax;
  auto out = kernels::max_pool2d(input.value(), kernel, stride, padding, &argmax);
  if (auto* trace = BranchTrace::active()) trace->record(hash_indices(argmax));
  return make_result<T>(
      std::move(out), {input.node()},
      [argmax = std::move(argmax)](Node<T>& self) {
        auto& x = *self.parents[0];
        accumulate(x, kernels::max_pool2d_backward(x.value.shape(), argmax,
                                                   self.grad));
      });
}

template <typename T>
Var<T> upsample_nearest(const Var<T>& input, int64_t factor) {
  return make_result<T>(kernels::upsample_nearest(input.value(), factor),
                        {input.node()}, [factor](Node<T>& self) {
                          accumulate(*self.parents[0],
                                     kernels::upsample_nearest_backward(
                                         self.grad, factor));
                        });
}

template <typename T>
Var<T> upsample_bilinear(const Var<T>& input, int64_t out_h, int64_t out_w) {
  return make_result<T>(
      kernels::upsample_bilinear(input.value(), out_h, out_w), {input.node()},
      [](Node<T>& self) {
        auto& x = *self.parents[0];
        accumulate(x, kernels::upsample_bilinear_backward(x.value.shape(),
                                                          self.grad));
      });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  a.value().require_same_shape(b.value(), "add");
  BasicTensor<T> out = a.value();
  out += b.value();
  return make_result<T>(std::move(out), {a.node(), b.node()},
                        [](Node<T>& self) {
                          auto& x = *self.parents[0];
                          auto& y = *self.parents[1];
                          if (y.requires_grad) accumulate(y, self.grad);
                          if (x.requires_grad) accumulate(x, std::move(self.grad));
                        });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  a.value().require_same_shape(b.value(), "mul");
  BasicTensor<T> out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return make_result<T>(
      std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
        auto& x = *self.parents[0];
        auto& y = *self.parents[1];
        if (x.requires_grad) {
          BasicTensor<T> g = self.grad;
          for (int64_t i = 0; i < g.numel(); ++i) g[i] *= y.value[i];
          accumulate(x, std::move(g));
        }
        if (y.requires_grad) {
          BasicTensor<T> g = self.grad;
          for (int64_t i = 0; i < g.numel(); ++i) g[i] *= x.value[i];
          accumulate(y, std::move(g));
        }
      });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  std::vector<const BasicTensor<T>*> values;
  std::vector<std::shared_ptr<Node<T>>> parents;
  for (const auto& p : parts) {
    values.push_back(&p.value());
    parents.push_back(p.node());
  }
  return make_result<T>(kernels::concat_channels(values), std::move(parents),
                        [](Node<T>& self) {
                          int64_t begin = 0;
                          for (auto& p : self.parents) {
                            const int64_t c = p->value.dim(1);
                            if (p->requires_grad)
                              accumulate(*p, kernels::slice_channels(
                                                 self.grad, begin, c));
                            begin += c;
                          }
                        });
}

template <typename T>
Var<T> softmax_channels(const Var<T>& logits) {
  return make_result<T>(kernels::softmax_channels(logits.value()),
                        {logits.node()}, [](Node<T>& self) {
                          accumulate(*self.parents[0],
                                     kernels::softmax_channels_backward(
                                         self.value, self.grad));
                        });
}

template <typename T>
Var<T> spatial_dropout(const Var<T>& input, double p, Mode mode,
                       RngStream& rng) {
  if (!(p >= 0.0 && p < 1.0))
    throw ValueError("spatial_dropout: p must lie in [0, 1)");
  if (mode == Mode::Eval || p == 0.0) return input;
  const Shape& s = input.shape();
  if (s.size() != 4)
    throw ShapeError("spatial_dropout: expected NCHW, got " + shape_string(s));
  const int64_t planes = s[0] * s[1], hw = s[2] * s[3];
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(static_cast<size_t>(planes));
  for (auto& m : mask) m = rng.uniform() < p ? T{0} : keep_scale;
  BasicTensor<T> out = input.value();
  for (int64_t pl = 0; pl < planes; ++pl)
    for (int64_t i = 0; i < hw; ++i) out[pl * hw + i] *= mask[static_cast<size_t>(pl)];
  return make_result<T>(std::move(out), {input.node()},
                        [mask = std::move(mask), hw](Node<T>& self) {
                          BasicTensor<T> g = std::move(self.grad);
                          for (size_t pl = 0; pl < mask.size(); ++pl)
                            for (int64_t i = 0; i < hw; ++i)
                              g[static_cast<int64_t>(pl) * hw + i] *= mask[pl];
                          accumulate(*self.parents[0], std::move(g));
                        });
}

template <typename T>
Var<T> sum(const Var<T>& input) {
  BasicTensor<T> out({1}, static_cast<T>(input.value().sum()));
  return make_result<T>(std::move(out), {input.node()}, [](Node<T>& self) {
    auto& x = *self.parents[0];
    accumulate(x, BasicTensor<T>::full(x.value.shape(), self.grad[0]));
  });
}

template <typename T>
Var<T> affine(const Var<T>& input, double scale, double shift) {
  BasicTensor<T> out = input.value();
  for (T& v : out.data()) v = static_cast<T>(scale * v + shift);
  return make_result<T>(std::move(out), {input.node()}, [scale](Node<T>& self) {
    BasicTensor<T> g = std::move(self.grad);
    g *= static_cast<T>(scale);
    accumulate(*self.parents[0], std::move(g));
  });
}

#define FPNSEG_INSTANTIATE(T)                                                  \
  template Var<T> detail::make_result(BasicTensor<T>,                          \
                                      std::vector<std::shared_ptr<Node<T>>>,   \
                                      std::function<void(Node<T>&)>);          \
  template void detail::accumulate(Node<T>&, BasicTensor<T>);                  \
  template GradMap<T> backward(const Var<T>&);                                 \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int64_t, \
                         int64_t);                                             \
  template Var<T> batch_norm2d(const Var<T>&, const Var<T>&, const Var<T>&,    \
                               BasicTensor<T>&, BasicTensor<T>&, Mode, double, \
                               double);                                        \
  template Var<T> relu(const Var<T>&);                                         \
  template Var<T> max_pool2d(const Var<T>&, int64_t, int64_t, int64_t);        \
  template Var<T> upsample_nearest(const Var<T>&, int64_t);                    \
  template Var<T> upsample_bilinear(const Var<T>&, int64_t, int64_t);          \
  template Var<T> add(const Var<T>&, const Var<T>&);                           \
  template Var<T> mul(const Var<T>&, const Var<T>&);                           \
  template Var<T> concat_channels(const std::vector<Var<T>>&);                 \
  template Var<T> softmax_channels(const Var<T>&);                             \
  template Var<T> spatial_dropout(const Var<T>&, double, Mode, RngStream&);    \
  template Var<T> sum(const Var<T>&);                                          \
  template Var<T> affine(const Var<T>&, double, double);

FPNSEG_INSTANTIATE(float)
FPNSEG_INSTANTIATE(double)
#undef FPNSEG_INSTANTIATE

}  // namespace fpnseg
