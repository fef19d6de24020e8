#pragma once

#include <cstdint>
#include <string>

#include "rwpcl/core/errors.hpp"
#include "rwpcl/model/perturb.hpp"

namespace rwpcl {

struct TrainConfig {
  double epsilon = 1e-3;  // perturbation strength
  double lambda = 0.2;    // weight of the contrastive term against the two CE terms
  double beta = 0.005;    // off-diagonal weight inside the Barlow Twins loss
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  std::size_t epochs = 40;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  NoiseScale noise_scale = NoiseScale::std_dev;
  bool bt_centering = false;
  bool rwp = true;  // perturbed stream on/off
  bool cl = true;   // contrastive stream on/off; off forces lambda = 0
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;  // global gradient-norm clip; 0 disables
  std::size_t eval_batch_size = 64;
  std::size_t proj_hidden = 1024;
  std::size_t proj_dim = 300;

  double effective_lambda() const { return cl ? lambda : 0.0; }

  void validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0,1]");
    if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
    if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be >= 0");
    if (proj_hidden < 1 || proj_dim < 1) throw ConfigError("projection dims must be >= 1");
    if (eval_batch_size < 1) throw ConfigError("eval_batch_size must be >= 1");
  }
};

}  // namespace rwpcl
