#include "fpnseg/optim.hpp"

#include <cmath>

namespace fpnseg {

Parameter& ParameterSet::add(std::string name, Tensor value) {
  if (index_.count(name))
    throw ValueError("duplicate parameter name " + name);
  index_.emplace(name, params_.size());
  params_.emplace_back(std::move(name), std::move(value));
  return params_.back();
}

Parameter& ParameterSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValueError("unknown parameter " + name);
  return params_[it->second];
}

const Parameter& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValueError("unknown parameter " + name);
  return params_[it->second];
}

bool ParameterSet::contains(const std::string& name) const {
  return index_.count(name) != 0;
}

int64_t ParameterSet::scalar_count() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

double adam_learning_rate(const AdamConfig& config, int64_t step) {
  if (config.decay_mode == DecayMode::Weight) return config.lr0;
  return config.lr0 / (1.0 + config.decay * static_cast<double>(step));
}

void adam_step(ParameterSet& params, const GradMap<float>& grads,
               const AdamConfig& config) {
  for (auto& p : params) {
    auto it = grads.find(p.name);
    if (it == grads.end())
      throw ValueError("adam_step: no gradient for parameter " + p.name);
    p.value.require_same_shape(it->second, "adam_step");
  }
  const double b1 = config.beta1, b2 = config.beta2;
  for (auto& p : params) {
    const Tensor& g = grads.at(p.name);
    const int64_t t = ++p.step;
    const double lr = adam_learning_rate(config, t);
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    const bool l2 = config.decay_mode == DecayMode::Weight;
    for (int64_t i = 0; i < p.value.numel(); ++i) {
      double gi = static_cast<double>(g[i]);
      if (l2) gi += config.decay * static_cast<double>(p.value[i]);
      double m = b1 * p.adam_m[i] + (1.0 - b1) * gi;
      double v = b2 * p.adam_v[i] + (1.0 - b2) * gi * gi;
      p.adam_m[i] = static_cast<float>(m);
      p.adam_v[i] = static_cast<float>(v);
      double update = lr * (m / c1) / (std::sqrt(v / c2) + config.epsilon);
      p.value[i] = static_cast<float>(p.value[i] - update);
    }
  }
}

}  // namespace fpnseg
