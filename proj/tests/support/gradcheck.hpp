#pragma once

// Central finite-difference gradient checks in double precision.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fpnseg/autograd.hpp"

namespace fpnseg::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<input>[<index>]" of the worst coordinate
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int64_t checked = 0;
  // Coordinates whose +h / -h evaluations took a different branch of a
  // piecewise op (ReLU sign, max-pool winner) than the unperturbed pass.
  int64_t skipped = 0;
};

using ScalarFn = std::function<Var<double>(const std::vector<Var<double>>&)>;

struct GradCheckOptions {
  double h = 1e-3;
  // Relative error is |a - n| / max(|a|, |n|, abs_floor).
  double abs_floor = 1e-6;
  // Check at most this many coordinates per input (evenly strided); 0 = all.
  int64_t max_coords_per_input = 0;
};

inline GradCheckResult grad_check(const std::vector<Tensor64>& inputs,
                                  const std::vector<std::string>& names,
                                  const ScalarFn& fn,
                                  const GradCheckOptions& opt = {}) {
  auto evaluate = [&](const std::vector<Tensor64>& xs, uint64_t* signature) {
    NoGradGuard guard;
    BranchTrace trace;
    std::vector<Var<double>> vars;
    for (const auto& x : xs) vars.push_back(Var<double>::leaf(x));
    const double v = fn(vars).value()[0];
    if (signature) *signature = trace.signature();
    return v;
  };

  std::vector<Var<double>> leaves;
  for (size_t i = 0; i < inputs.size(); ++i)
    leaves.push_back(Var<double>::leaf(inputs[i], true, names[i]));
  GradMap<double> grads = backward(fn(leaves));

  uint64_t base_sig = 0;
  evaluate(inputs, &base_sig);

  GradCheckResult result;
  std::vector<Tensor64> work = inputs;
  for (size_t i = 0; i < inputs.size(); ++i) {
    const Tensor64& g = grads.at(names[i]);
    const int64_t n = inputs[i].numel();
    int64_t stride = 1;
    if (opt.max_coords_per_input > 0 && n > opt.max_coords_per_input)
      stride = (n + opt.max_coords_per_input - 1) / opt.max_coords_per_input;
    for (int64_t k = 0; k < n; k += stride) {
      const double x0 = inputs[i][k];
      uint64_t sp = 0, sm = 0;
      work[i][k] = x0 + opt.h;
      const double fp = evaluate(work, &sp);
      work[i][k] = x0 - opt.h;
      const double fm = evaluate(work, &sm);
      work[i][k] = x0;
      if (sp != base_sig || sm != base_sig) {
        ++result.skipped;
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * opt.h);
      const double analytic = g[k];
      const double denom =
          std::max({std::abs(numeric), std::abs(analytic), opt.abs_floor});
      const double rel = std::abs(numeric - analytic) / denom;
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst = names[i] + "[" + std::to_string(k) + "]";
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace fpnseg::testing
