#pragma once

// Finite-difference verification of every differentiable piece: the tensor
// ops, a micro encoder, the projection head, and one full joint training step
// with its noise replayed. Analytic gradients of (a)-(c) come from the 64-bit
// instantiation; (d) checks the 32-bit training path against 64-bit differences.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "rwpcl/core/gradcheck.hpp"
#include "rwpcl/core/ops.hpp"
#include "rwpcl/model/barlow_twins.hpp"
#include "rwpcl/model/encoder.hpp"
#include "rwpcl/model/projection.hpp"
#include "rwpcl/train/step.hpp"

namespace rwpcl {

struct GradCheckEntry {
  std::string name;
  std::string group;  // "op", "encoder", "projection", "train_step"
  double threshold = 0.0;
  std::size_t instances = 0;
  GradCheckReport report;

  bool passed() const { return report.max_rel_error < threshold; }
};

struct GradCheckSuiteResult {
  std::vector<GradCheckEntry> entries;

  bool passed() const {
    for (const auto& e : entries)
      if (!e.passed()) return false;
    return !entries.empty();
  }
  double max_rel_error(const std::string& group) const {
    double m = 0.0;
    for (const auto& e : entries)
      if (e.group == group) m = std::max(m, e.report.max_rel_error);
    return m;
  }
};

inline nlohmann::json to_json(const GradCheckSuiteResult& r) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : r.entries)
    arr.push_back({{"name", e.name},
                   {"group", e.group},
                   {"instances", e.instances},
                   {"coordinates", e.report.coordinates},
                   {"max_rel_error", e.report.max_rel_error},
                   {"max_abs_error", e.report.max_abs_error},
                   {"threshold", e.threshold},
                   {"worst", e.report.worst},
                   {"passed", e.passed()}});
  return {{"checks", arr}, {"passed", r.passed()}};
}

namespace gradcheck_detail {

using D = double;
using Leaves = std::vector<Var<D>>;

inline Tensor<D> random_tensor(Rng& rng, Shape dims, double lo = -1.0, double hi = 1.0) {
  Tensor<D> t(std::move(dims));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.values) v = u(rng);
  return t;
}

// Reduces any output to a scalar with fixed random weights so that every
// output coordinate contributes a distinct gradient.
inline Var<D> weighted_sum(Var<D> y, std::uint64_t seed) {
  Rng rng(seed);
  return ops::sum(ops::mul(y, y.tape->constant(random_tensor(rng, y.dims()))));
}

struct OpCase {
  std::string name;
  std::function<std::vector<Tensor<D>>(Rng&)> inputs;
  std::function<Var<D>(Tape<D>&, const Leaves&)> fn;
};

inline std::vector<OpCase> op_cases() {
  std::vector<OpCase> c;
  auto ws = [](Var<D> y) { return weighted_sum(y, 99); };
  c.push_back({"matmul", [](Rng& r) { return std::vector{random_tensor(r, {3, 4}), random_tensor(r, {4, 2})}; },
               [=](Tape<D>&, const Leaves& l) { return ws(ops::matmul(l[0], l[1])); }});
  c.push_back({"transpose", [](Rng& r) { return std::vector{random_tensor(r, {3, 5})}; },
               [=](Tape<D>&, const Leaves& l) { return ws(ops::transpose(l[0])); }});
  c.push_back({"add_broadcast", [](Rng& r) { return std::vector{random_tensor(r, {3, 4}), random_tensor(r, {4})}; },
               [=](Tape<D>&, const Leaves& l) { return ws(ops::add(l[0], l[1])); }});
  c.push_back({"sub_broadcast", [](Rng& r) { return std::vector{random_tensor(r, {4}), random_tensor(r, {2, 4})}; },
               [=](Tape<D>&, const Leaves& l) { return ws(ops::sub(l[0], l[1])); }});
  c.push_back({"mul_broadcast", [](Rng& r) { return std::vector{random_tensor(r, {2, 3, 4}), random_tensor(r, {3, 4})}; },
               [=](Tape<D>&, const Leaves& l) { return ws(ops::mul(l[0], l[1])); }});
  c.push_back({"scale", [](Rng& r) { return std::vector{random_tensor(r, {5})}; },
               [=](Tape<D>&, const Leaves& l) { return ws(ops::scale(l[0], 0.37)); }});
  c.push_back({"sum", [](Rng& r) { return std::vector{random_tensor(r, {2, 3})}; },
               [=](Tape<D>&, const Leaves& l) { return ops::scale(ops::sum(ops::mul(l[0], l[0])), 0.5); }});
  c.push_back({"relu", [](Rng& r) { return std::vector{random_tensor(r, {4, 5})}; },
               [=](Tape<D>&, const Leaves& l) { return ws(ops::relu(l[0])); }});
  c.push_back({"softmax_rows", [](Rng& r) { return std::vector{random_tensor(r, {3, 4}, -2, 2)}; },
               [=](Tape<D>&, const Leaves& l) { return ws(ops::softmax_rows(l[0])); }});
  c.push_back({"layernorm_rows", [](Rng& r) { return std::vector{random_tensor(r, {3, 6}, -2, 2)}; },
               [=](Tape<D>&, const Leaves& l) { return ws(ops::layernorm_rows(l[0])); }});
  c.push_back({"gather_rows", [](Rng& r) { return std::vector{random_tensor(r, {5, 3})}; },
               [=](Tape<D>&, const Leaves& l) { return ws(ops::gather_rows(l[0], {4, 0, 4, 2})); }});
  c.push_back({"batchnorm1d",
               [](Rng& r) {
                 return std::vector{random_tensor(r, {5, 3}, -2, 2), random_tensor(r, {3}, 0.5, 1.5),
                                    random_tensor(r, {3})};
               },
               [=](Tape<D>&, const Leaves& l) { return ws(ops::batchnorm1d(l[0], l[1], l[2], 1e-5, true)); }});
  c.push_back({"attention",
               [](Rng& r) {
                 return std::vector{random_tensor(r, {6, 4}), random_tensor(r, {6, 4}), random_tensor(r, {6, 4})};
               },
               [=](Tape<D>&, const Leaves& l) {
                 // two sequences of length 3, the second with one padded key
                 return ws(ops::attention(l[0], l[1], l[2], {1, 1, 1, 1, 1, 0}, 2, 3, 2));
               }});
  c.push_back({"center_cols", [](Rng& r) { return std::vector{random_tensor(r, {4, 3})}; },
               [=](Tape<D>&, const Leaves& l) { return ws(ops::center_cols(l[0])); }});
  c.push_back({"normalize_cols", [](Rng& r) { return std::vector{random_tensor(r, {4, 3})}; },
               [=](Tape<D>&, const Leaves& l) { return ws(ops::normalize_cols(l[0])); }});
  c.push_back({"cross_entropy", [](Rng& r) { return std::vector{random_tensor(r, {4, 3}, -2, 2)}; },
               [=](Tape<D>&, const Leaves& l) {
                 static const std::vector<int> labels{0, 2, 1, 2};
                 return ops::cross_entropy(l[0], labels);
               }});
  c.push_back({"cross_correlation", [](Rng& r) { return std::vector{random_tensor(r, {5, 3}), random_tensor(r, {5, 3})}; },
               [=](Tape<D>&, const Leaves& l) { return ws(cross_correlation(l[0], l[1])); }});
  c.push_back({"cross_correlation_centered",
               [](Rng& r) { return std::vector{random_tensor(r, {5, 3}), random_tensor(r, {5, 3})}; },
               [=](Tape<D>&, const Leaves& l) { return ws(cross_correlation(l[0], l[1], true)); }});
  c.push_back({"bt_loss", [](Rng& r) { return std::vector{random_tensor(r, {4, 4})}; },
               [=](Tape<D>&, const Leaves& l) { return bt_loss(l[0], 0.005); }});
  return c;
}

}  // namespace gradcheck_detail

/// Micro encoder used by the encoder and train-step checks.
inline EncoderConfig micro_encoder_config(std::size_t layers = 2, std::size_t dim = 8) {
  EncoderConfig e;
  e.layers = layers;
  e.model_dim = dim;
  e.heads = 2;
  e.ff_dim = 2 * dim;
  e.vocab_size = 12;
  e.max_len = 6;
  e.num_classes = 3;
  return e;
}

inline std::vector<TokenizedExample> micro_batch(std::size_t b, const EncoderConfig& enc, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<int> tok(4, static_cast<int>(enc.vocab_size) - 1);
  std::vector<TokenizedExample> out;
  for (std::size_t e = 0; e < b; ++e) {
    std::vector<std::string> words;
    const std::size_t n = 1 + (e % (enc.max_len - 2));
    TokenizedExample ex;
    ex.ids.assign(enc.max_len, text::Vocabulary::kPad);
    ex.mask.assign(enc.max_len, 0);
    ex.ids[0] = text::Vocabulary::kCls;
    for (std::size_t i = 0; i < n; ++i) ex.ids[i + 1] = tok(rng);
    ex.ids[n + 1] = text::Vocabulary::kSep;
    for (std::size_t i = 0; i < n + 2; ++i) ex.mask[i] = 1;
    ex.label = static_cast<int>(e % enc.num_classes);
    out.push_back(ex);
  }
  return out;
}

/// (a) every op on `instances` random inputs.
inline std::vector<GradCheckEntry> check_ops(std::size_t instances = 20, std::uint64_t seed = 1) {
  std::vector<GradCheckEntry> out;
  for (const auto& c : gradcheck_detail::op_cases()) {
    GradCheckEntry e{c.name, "op", 1e-4, instances, {}};
    for (std::size_t i = 0; i < instances; ++i) {
      Rng rng(derive_seed(seed, c.name + "/" + std::to_string(i)));
      e.report.merge(check_gradients(c.fn, c.inputs(rng)));
    }
    out.push_back(std::move(e));
  }
  return out;
}

/// (b) cross-entropy of a micro encoder w.r.t. all its parameters.
inline GradCheckEntry check_encoder(std::uint64_t seed = 2) {
  const EncoderConfig enc = micro_encoder_config(2, 8);
  auto params = init_encoder<double>(enc, seed);
  const auto batch = micro_batch(3, enc, seed + 1);
  const auto labels = batch_labels(batch);
  std::vector<std::pair<std::string, Tensor<double>*>> targets;
  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    auto out = encoder_forward(tape, params, enc, std::span<const TokenizedExample>(batch));
    tape.backward(ops::cross_entropy(out.logits, labels));
    for (auto& [name, t] : params) {
      targets.emplace_back(name, &t);
      analytic.push_back(tape.grad_of(t));
    }
  }
  auto loss = [&] {
    Tape<double> tape(false);
    auto out = encoder_forward(tape, params, enc, std::span<const TokenizedExample>(batch));
    return ops::cross_entropy(out.logits, labels).item();
  };
  return {"micro_encoder_L2_d8", "encoder", 1e-4, 1, finite_difference_check(targets, analytic, loss)};
}

/// (c) projection head 8 -> 16 -> 5 on a 4x8 input, w.r.t. input and parameters.
inline GradCheckEntry check_projection(std::uint64_t seed = 3) {
  ProjectionConfig pc;
  pc.input_dim = 8;
  pc.hidden_dim = 16;
  pc.output_dim = 5;
  auto proj = ProjectionParams<double>::init(pc, seed);
  Rng rng(seed + 1);
  Tensor<double> x = gradcheck_detail::random_tensor(rng, {4, 8});
  std::vector<std::pair<std::string, Tensor<double>*>> targets{{"input", &x}};
  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    Var<double> in = tape.param(x);
    tape.backward(gradcheck_detail::weighted_sum(project(tape, proj, in, true, false), 7));
    analytic.push_back(tape.grad_of(x));
    for (auto& [name, t] : proj.params) {
      targets.emplace_back(name, &t);
      analytic.push_back(tape.grad_of(t));
    }
  }
  auto loss = [&] {
    Tape<double> tape(false);
    return gradcheck_detail::weighted_sum(project(tape, proj, tape.constant(x), true, false), 7).item();
  };
  return {"projection_8_16_5", "projection", 1e-4, 1, finite_difference_check(targets, analytic, loss)};
}

/// (d) one full joint step: the gradients train_step would apply (both
/// streams, Barlow Twins through the projection) against central differences
/// of the same objective with the step's noise δ replayed and held fixed.
/// Both sides run in 64-bit.
inline GradCheckEntry check_train_step(std::size_t batch_size = 4, std::uint64_t seed = 4) {
  const EncoderConfig enc = micro_encoder_config(1, 4);
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.epsilon = 1e-2;
  cfg.lambda = 0.3;
  cfg.beta = 0.005;
  cfg.proj_hidden = 8;
  cfg.proj_dim = 3;
  cfg.clip_norm = 0.0;
  auto st = init_train_state<double>(enc, cfg);
  const auto batch = micro_batch(batch_size, enc, seed + 1);
  auto model = st.model;
  auto proj = st.projection;  // running statistics before the step
  const StepReport rep = compute_gradients(st, std::span<const TokenizedExample>(batch), enc, cfg);

  const auto noise = sample_noise(model, step_perturbation(cfg, st.trial_seed, rep.step));
  std::vector<std::pair<std::string, Tensor<double>*>> targets;
  std::vector<std::vector<double>> analytic;
  for (auto& [name, t] : model) {
    targets.emplace_back(name, &t);
    analytic.push_back(st.model.at(name).grad);
  }
  for (auto& [name, t] : proj.params) {
    targets.emplace_back(name, &t);
    analytic.push_back(st.projection.params.at(name).grad);
  }
  auto loss = [&] {
    const auto pert = apply_noise(model, noise);
    Tape<double> tape(false);
    return joint_loss(tape, model, &pert.params, proj, enc, cfg, std::span<const TokenizedExample>(batch), false)
        .total.item();
  };
  return {"train_step_d4_L1_b" + std::to_string(batch_size), "train_step", 1e-3, 1,
          finite_difference_check(targets, analytic, loss)};
}

inline GradCheckSuiteResult run_gradcheck_suite(std::uint64_t seed = 0) {
  GradCheckSuiteResult r;
  r.entries = check_ops(20, derive_seed(seed, "ops"));
  r.entries.push_back(check_encoder(derive_seed(seed, "encoder")));
  r.entries.push_back(check_projection(derive_seed(seed, "projection")));
  r.entries.push_back(check_train_step(4, derive_seed(seed, "train_step")));
  return r;
}

}  // namespace rwpcl
