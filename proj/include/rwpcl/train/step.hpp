#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "rwpcl/core/ops.hpp"
#include "rwpcl/model/barlow_twins.hpp"
#include "rwpcl/model/encoder.hpp"
#include "rwpcl/model/perturb.hpp"
#include "rwpcl/model/projection.hpp"
#include "rwpcl/train/config.hpp"
#include "rwpcl/train/optimizer.hpp"

namespace rwpcl {

/// Handles to the four loss terms of one joint forward pass.
template <typename T>
struct JointLoss {
  Var<T> ce1;    // clean stream
  Var<T> ce2;    // perturbed stream (== ce1 when rwp is off)
  Var<T> bt;     // Barlow Twins between projected clean/perturbed CLS (0 when cl is off)
  Var<T> total;  // (1-λ)/2·(ce1+ce2) + λ·bt
  double lambda = 0.0;
};

/// (1 − λ)/2 · (ce1 + ce2) + λ · bt
template <typename T>
Var<T> total_loss(Var<T> ce1, Var<T> ce2, Var<T> bt, T lambda) {
  return ops::add(ops::scale(ops::add(ce1, ce2), (T(1) - lambda) / T(2)), ops::scale(bt, lambda));
}

inline double total_loss(double ce1, double ce2, double bt, double lambda) {
  return (1.0 - lambda) / 2.0 * (ce1 + ce2) + lambda * bt;
}

inline std::vector<int> batch_labels(std::span<const TokenizedExample> batch) {
  std::vector<int> out;
  out.reserve(batch.size());
  for (const auto& ex : batch) out.push_back(ex.label);
  return out;
}

/// Builds the three-stream objective on `tape`. `perturbed` holds w+δ (δ fixed);
/// pass nullptr to reuse the clean stream as the second stream.
template <typename T>
JointLoss<T> joint_loss(Tape<T>& tape, const ModelParams<T>& clean, const ModelParams<T>* perturbed,
                        ProjectionParams<T>& proj, const EncoderConfig& enc, const TrainConfig& cfg,
                        std::span<const TokenizedExample> batch, bool update_running = true) {
  const std::vector<int> labels = batch_labels(batch);
  JointLoss<T> out;
  out.lambda = cfg.effective_lambda();
  auto c = encoder_forward(tape, clean, enc, batch);
  out.ce1 = ops::cross_entropy(c.logits, labels);
  out.ce2 = out.ce1;
  Var<T> cls_p = c.cls;
  if (perturbed) {
    auto p = encoder_forward(tape, *perturbed, enc, batch);
    out.ce2 = ops::cross_entropy(p.logits, labels);
    cls_p = p.cls;
  }
  if (cfg.cl) {
    Var<T> ec = project(tape, proj, c.cls, true, update_running);
    Var<T> ep = project(tape, proj, cls_p, true, update_running);
    out.bt = bt_loss(cross_correlation(ec, ep, cfg.bt_centering), static_cast<T>(cfg.beta));
  } else {
    out.bt = tape.constant(Tensor<T>::scalar(T(0)));
  }
  out.total = total_loss(out.ce1, out.ce2, out.bt, static_cast<T>(out.lambda));
  return out;
}

struct StepReport {
  std::size_t step = 0;
  double ce1 = 0.0, ce2 = 0.0, bt = 0.0, total = 0.0;
  double grad_norm = 0.0;  // global norm before clipping
  double lambda = 0.0;     // effective λ used for this step
  bool finite = true;

  /// |total − ((1−λ)/2·(ce1+ce2) + λ·bt)| within tol, relative to max(1, |total|).
  bool identity_holds(double tol = 1e-6) const {
    return std::abs(total - total_loss(ce1, ce2, bt, lambda)) <= tol * std::max(1.0, std::abs(total));
  }
};

template <typename T>
struct TrainState {
  ModelParams<T> model;
  ProjectionParams<T> projection;
  AdamW<T> model_opt;
  AdamW<T> projection_opt;
  std::uint64_t trial_seed = 0;
  std::size_t step = 0;
};

inline ProjectionConfig projection_config(const EncoderConfig& enc, const TrainConfig& cfg) {
  ProjectionConfig pc;
  pc.input_dim = enc.model_dim;
  pc.hidden_dim = cfg.proj_hidden;
  pc.output_dim = cfg.proj_dim;
  return pc;
}

template <typename T>
TrainState<T> init_train_state(const EncoderConfig& enc, const TrainConfig& cfg) {
  cfg.validate();
  TrainState<T> s{
      init_encoder<T>(enc, derive_seed(cfg.seed, "init/encoder")),
      ProjectionParams<T>::init(projection_config(enc, cfg), derive_seed(cfg.seed, "init/projection")),
      AdamW<T>(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay),
      AdamW<T>(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay),
      cfg.seed,
      0};
  return s;
}

/// Noise seed for a given optimizer step: fresh perturbations every step.
inline std::uint64_t step_noise_seed(std::uint64_t trial_seed, std::size_t step) {
  return derive_seed(trial_seed, static_cast<std::uint64_t>(step));
}

inline PerturbationConfig step_perturbation(const TrainConfig& cfg, std::uint64_t trial_seed, std::size_t step) {
  PerturbationConfig pc;
  pc.epsilon = cfg.epsilon;
  pc.seed = step_noise_seed(trial_seed, step);
  pc.noise_scale = cfg.noise_scale;
  return pc;
}

/// Forward + backward of the joint objective for one batch. Leaves the
/// combined gradient in Tensor::grad of every encoder tensor (clean-stream
/// gradient plus the gradient taken at w+δ, δ held constant) and, when the
/// contrastive stream is on, of every projection tensor. Advances st.step,
/// which selects the noise seed. Returns finite == false (grads cleared) on a
/// non-finite loss or gradient.
template <typename T>
StepReport compute_gradients(TrainState<T>& st, std::span<const TokenizedExample> batch, const EncoderConfig& enc,
                             const TrainConfig& cfg) {
  if (batch.size() < 2) throw ContractError("train_step: batch size must be >= 2");
  const std::size_t step = ++st.step;
  StepReport rep;
  rep.step = step;
  for (auto& [_, w] : st.model) w.grad.clear();
  for (auto& [_, w] : st.projection.params) w.grad.clear();

  PerturbedParams<T> pert;
  if (cfg.rwp) pert = perturb(st.model, step_perturbation(cfg, st.trial_seed, step));

  Tape<T> tape;
  JointLoss<T> jl = joint_loss(tape, st.model, cfg.rwp ? &pert.params : nullptr, st.projection, enc, cfg, batch);
  rep.ce1 = jl.ce1.item();
  rep.ce2 = jl.ce2.item();
  rep.bt = jl.bt.item();
  rep.total = jl.total.item();
  rep.lambda = jl.lambda;
  if (!std::isfinite(rep.total) || !std::isfinite(rep.ce1) || !std::isfinite(rep.ce2) || !std::isfinite(rep.bt)) {
    rep.finite = false;
    return rep;
  }
  tape.backward(jl.total);

  double sq = 0.0;
  for (auto& [name, w] : st.model) {
    w.grad = tape.grad_of(w);
    if (cfg.rwp) {
      const auto gp = tape.grad_of(pert.params.at(name));
      for (std::size_t i = 0; i < gp.size(); ++i) w.grad[i] += gp[i];
    }
    for (T g : w.grad) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  if (cfg.cl)
    for (auto& [name, w] : st.projection.params) {
      w.grad = tape.grad_of(w);
      for (T g : w.grad) sq += static_cast<double>(g) * static_cast<double>(g);
    }
  rep.grad_norm = std::sqrt(sq);
  if (!std::isfinite(rep.grad_norm)) {
    rep.finite = false;
    for (auto& [_, w] : st.model) w.grad.clear();
    for (auto& [_, w] : st.projection.params) w.grad.clear();
  }
  return rep;
}

/// One joint update: compute_gradients, optional global-norm clipping, then
/// AdamW on the encoder and (when the contrastive stream is on) the projection.
/// A non-finite report leaves the parameters untouched.
template <typename T>
StepReport train_step(TrainState<T>& st, std::span<const TokenizedExample> batch, const EncoderConfig& enc,
                      const TrainConfig& cfg) {
  StepReport rep = compute_gradients(st, batch, enc, cfg);
  if (!rep.finite) return rep;
  if (cfg.clip_norm > 0.0 && rep.grad_norm > cfg.clip_norm) {
    const T f = static_cast<T>(cfg.clip_norm / rep.grad_norm);
    for (auto& [_, w] : st.model)
      for (auto& g : w.grad) g *= f;
    for (auto& [_, w] : st.projection.params)
      for (auto& g : w.grad) g *= f;
  }
  st.model_opt.step(st.model);
  if (cfg.cl) st.projection_opt.step(st.projection.params);
  for (auto& [_, w] : st.model) w.grad.clear();
  for (auto& [_, w] : st.projection.params) w.grad.clear();
  return rep;
}

}  // namespace rwpcl
