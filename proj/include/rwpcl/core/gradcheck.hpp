#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "rwpcl/core/tape.hpp"
#include "rwpcl/core/tensor.hpp"

namespace rwpcl {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;

  void merge(const GradCheckReport& o) {
    if (o.max_rel_error > max_rel_error) {
      max_rel_error = o.max_rel_error;
      worst = o.worst;
    }
    max_abs_error = std::max(max_abs_error, o.max_abs_error);
    coordinates += o.coordinates;
  }
};

struct GradCheckOptions {
  double step = 1e-5;
  // Gradients smaller than this are compared on an absolute scale; below it
  // the central difference is dominated by rounding, not by the derivative.
  double floor = 1e-4;
  // Upper bound on checked coordinates per tensor (evenly strided); 0 = all.
  std::size_t max_per_tensor = 0;
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Nudges each selected coordinate of every target by ±step and compares the
/// central difference of `loss()` against `analytic` (same layout as targets).
template <typename LossFn>
GradCheckReport finite_difference_check(
    const std::vector<std::pair<std::string, Tensor<double>*>>& targets,
    const std::vector<std::vector<double>>& analytic, LossFn&& loss,
    const GradCheckOptions& opt = {}) {
  GradCheckReport rep;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    auto& [name, tensor] = targets[t];
    const std::size_t n = tensor->size();
    const std::size_t stride =
        opt.max_per_tensor && n > opt.max_per_tensor ? (n + opt.max_per_tensor - 1) / opt.max_per_tensor : 1;
    for (std::size_t i = 0; i < n; i += stride) {
      double& x = tensor->values[i];
      const double saved = x;
      x = saved + opt.step;
      const double up = loss();
      x = saved - opt.step;
      const double down = loss();
      x = saved;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double a = analytic[t][i];
      const double rel = relative_error(a, numeric, opt.floor);
      rep.max_abs_error = std::max(rep.max_abs_error, std::abs(a - numeric));
      if (rel > rep.max_rel_error || rep.worst.empty()) {
        rep.max_rel_error = rel;
        rep.worst = name + "[" + std::to_string(i) + "] analytic=" + std::to_string(a) +
                    " numeric=" + std::to_string(numeric);
      }
      ++rep.coordinates;
    }
  }
  return rep;
}

/// Gradient check for a function of free tensors, evaluated in 64-bit.
/// `fn(tape, leaves)` must return a scalar Var built from `leaves`.
template <typename Fn>
GradCheckReport check_gradients(Fn&& fn, std::vector<Tensor<double>> inputs,
                                const GradCheckOptions& opt = {}) {
  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    for (auto& in : inputs) leaves.push_back(tape.variable(in));
    Var<double> out = fn(tape, leaves);
    tape.backward(out);
    for (auto& l : leaves) analytic.push_back(tape.grad(l).values);
  }
  auto loss = [&] {
    Tape<double> tape(false);
    std::vector<Var<double>> leaves;
    for (auto& in : inputs) leaves.push_back(tape.constant(in));
    return fn(tape, leaves).item();
  };
  std::vector<std::pair<std::string, Tensor<double>*>> targets;
  for (std::size_t i = 0; i < inputs.size(); ++i) targets.emplace_back("input" + std::to_string(i), &inputs[i]);
  return finite_difference_check(targets, analytic, loss, opt);
}

}  // namespace rwpcl
