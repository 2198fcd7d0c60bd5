#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fpnseg/autograd.hpp"
#include "fpnseg/tensor.hpp"

namespace fpnseg {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor adam_m;
  Tensor adam_v;
  int64_t step = 0;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)),
        value(std::move(v)),
        adam_m(Tensor::zeros_like(value)),
        adam_v(Tensor::zeros_like(value)) {}
};

// Ordered, name-indexed parameter collection. Insertion order is the
// canonical order used for serialization and iteration.
class ParameterSet {
 public:
  Parameter& add(std::string name, Tensor value);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  size_t size() const noexcept { return params_.size(); }
  int64_t scalar_count() const;

  std::vector<Parameter>& items() noexcept { return params_; }
  const std::vector<Parameter>& items() const noexcept { return params_; }
  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }
  auto begin() const noexcept { return params_.begin(); }
  auto end() const noexcept { return params_.end(); }

 private:
  std::vector<Parameter> params_;
  std::map<std::string, size_t> index_;
};

// "decay" is read as learning-rate decay lr0 / (1 + decay * t) by default;
// DecayMode::Weight instead adds decay * w to the gradient (L2 coupling).
enum class DecayMode { LearningRate, Weight };

struct AdamConfig {
  double lr0 = 1e-4;
  double decay = 1e-4;
  DecayMode decay_mode = DecayMode::LearningRate;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Effective learning rate at 1-based step t.
double adam_learning_rate(const AdamConfig& config, int64_t step);

// One Adam update of every parameter. Throws if a gradient is missing or
// has the wrong shape.
void adam_step(ParameterSet& params, const GradMap<float>& grads,
               const AdamConfig& config);

}  // namespace fpnseg
