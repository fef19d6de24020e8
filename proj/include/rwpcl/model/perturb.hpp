#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rwpcl/core/errors.hpp"
#include "rwpcl/core/rng.hpp"
#include "rwpcl/model/params.hpp"

namespace rwpcl {

/// How ε·‖w‖₂ enters the Gaussian: as its standard deviation (default) or as its variance.
enum class NoiseScale { std_dev, variance };

struct PerturbationConfig {
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  // Name prefixes to perturb; empty means every tensor.
  std::vector<std::string> include;
  NoiseScale noise_scale = NoiseScale::std_dev;

  void validate() const {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("perturb: epsilon must be finite and >= 0");
  }
  bool includes(const std::string& name) const {
    if (include.empty()) return true;
    for (const auto& p : include)
      if (name.compare(0, p.size(), p) == 0) return true;
    return false;
  }
};

/// Per-element noise standard deviation for tensor w.
template <typename T>
double noise_sigma(const Tensor<T>& w, double epsilon, NoiseScale scale = NoiseScale::std_dev) {
  const double s = epsilon * l2_norm(w);
  return scale == NoiseScale::std_dev ? s : std::sqrt(s);
}

template <typename T>
struct PerturbedParams {
  ParamMap<T> params;
  std::uint64_t source_checksum = 0;
  std::uint64_t seed = 0;
};

/// Noise tensors δ for every included parameter (excluded names are absent).
/// Each tensor's stream is seeded from (cfg.seed, name).
template <typename T>
ParamMap<T> sample_noise(const ParamMap<T>& params, const PerturbationConfig& cfg) {
  cfg.validate();
  ParamMap<T> noise;
  for (const auto& [name, w] : params) {
    if (!cfg.includes(name)) continue;
    const double sigma = noise_sigma(w, cfg.epsilon, cfg.noise_scale);
    Tensor<T> delta(w.dims, T(0));
    if (sigma > 0.0) {
      Rng rng(derive_seed(cfg.seed, name));
      std::normal_distribution<double> normal(0.0, 1.0);
      for (auto& v : delta.values) v = static_cast<T>(sigma * normal(rng));
    }
    noise.emplace(name, std::move(delta));
  }
  return noise;
}

/// w + δ for tensors present in `noise`; all other tensors are copied as-is.
template <typename T>
PerturbedParams<T> apply_noise(const ParamMap<T>& params, const ParamMap<T>& noise, std::uint64_t seed = 0) {
  PerturbedParams<T> out{params, checksum(params), seed};
  for (auto& [name, w] : out.params) {
    auto it = noise.find(name);
    if (it == noise.end()) continue;
    if (it->second.dims != w.dims) throw ShapeError("perturb: noise shape mismatch for " + name);
    for (std::size_t i = 0; i < w.size(); ++i)
      if (it->second.values[i] != T(0)) w.values[i] += it->second.values[i];
  }
  return out;
}

/// w_L + δ_L with δ_L ~ N(0, σ_L²) elementwise, σ_L = ε·‖w_L‖₂ for every included tensor.
template <typename T>
PerturbedParams<T> perturb(const ParamMap<T>& params, const PerturbationConfig& cfg) {
  return apply_noise(params, sample_noise(params, cfg), cfg.seed);
}

}  // namespace rwpcl
