#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rwpcl/core/errors.hpp"
#include "rwpcl/core/ops.hpp"
#include "rwpcl/core/rng.hpp"
#include "rwpcl/model/params.hpp"

namespace rwpcl {

struct ProjectionConfig {
  std::size_t input_dim = 64;
  std::size_t hidden_dim = 1024;
  std::size_t output_dim = 300;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
};

/// linear(input->hidden) -> batchnorm1d -> ReLU -> linear(hidden->output).
/// One instance serves both the clean and the perturbed stream.
template <typename T>
struct ProjectionParams {
  ProjectionConfig cfg;
  ParamMap<T> params;  // "proj.linear1.*", "proj.bn.*", "proj.linear2.*"
  std::vector<T> running_mean;
  std::vector<T> running_var;

  static ProjectionParams init(const ProjectionConfig& cfg, std::uint64_t seed) {
    if (!cfg.input_dim || !cfg.hidden_dim || !cfg.output_dim) throw ConfigError("projection: dims must be positive");
    ProjectionParams p;
    p.cfg = cfg;
    auto linear = [&](const std::string& prefix, std::size_t in, std::size_t out) {
      Tensor<T> w({in, out});
      Rng rng(derive_seed(seed, prefix));
      const double a = std::sqrt(6.0 / static_cast<double>(in + out));
      std::uniform_real_distribution<double> u(-a, a);
      for (auto& v : w.values) v = static_cast<T>(u(rng));
      p.params.emplace(prefix + ".weight", std::move(w));
      p.params.emplace(prefix + ".bias", Tensor<T>({out}, T(0)));
    };
    linear("proj.linear1", cfg.input_dim, cfg.hidden_dim);
    p.params.emplace("proj.bn.gamma", Tensor<T>({cfg.hidden_dim}, T(1)));
    p.params.emplace("proj.bn.beta", Tensor<T>({cfg.hidden_dim}, T(0)));
    linear("proj.linear2", cfg.hidden_dim, cfg.output_dim);
    p.running_mean.assign(cfg.hidden_dim, T(0));
    p.running_var.assign(cfg.hidden_dim, T(1));
    return p;
  }

  /// Trainable tensors plus running statistics, for checkpoints.
  ParamMap<T> to_tensors() const {
    ParamMap<T> out = params;
    out.emplace("proj.bn.running_mean", Tensor<T>({cfg.hidden_dim}, running_mean));
    out.emplace("proj.bn.running_var", Tensor<T>({cfg.hidden_dim}, running_var));
    return out;
  }

  template <typename U>
  ProjectionParams<U> cast() const {
    ProjectionParams<U> out;
    out.cfg = cfg;
    out.params = cast_params<U>(params);
    out.running_mean.assign(running_mean.begin(), running_mean.end());
    out.running_var.assign(running_var.begin(), running_var.end());
    return out;
  }
};

/// Projects CLS representations [b, input_dim] to [b, output_dim]. In training
/// mode batch norm uses batch statistics (b >= 2) and, when update_running is
/// set, folds them into the running statistics.
template <typename T>
Var<T> project(Tape<T>& tape, ProjectionParams<T>& proj, Var<T> cls, bool training, bool update_running = true) {
  if (cls.value().rank() != 2 || cls.dims()[1] != proj.cfg.input_dim)
    throw ShapeError("project: expected [b," + std::to_string(proj.cfg.input_dim) + "] input, got " + shape_str(cls.dims()));
  if (training && cls.dims()[0] < 2) throw ContractError("project: training mode needs batch size >= 2 (got 1)");
  auto P = [&](const char* name) { return tape.param(proj.params.at(name)); };
  Var<T> h = ops::add(ops::matmul(cls, P("proj.linear1.weight")), P("proj.linear1.bias"));
  ops::BatchNormRunning<T> running;
  if (!training || update_running) running = {&proj.running_mean, &proj.running_var, static_cast<T>(proj.cfg.bn_momentum)};
  h = ops::batchnorm1d(h, P("proj.bn.gamma"), P("proj.bn.beta"), static_cast<T>(proj.cfg.bn_eps), training, running);
  h = ops::relu(h);
  return ops::add(ops::matmul(h, P("proj.linear2.weight")), P("proj.linear2.bias"));
}

}  // namespace rwpcl
