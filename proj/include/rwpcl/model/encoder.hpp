#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rwpcl/core/errors.hpp"
#include "rwpcl/core/ops.hpp"
#include "rwpcl/core/rng.hpp"
#include "rwpcl/model/params.hpp"
#include "rwpcl/text/tokenize.hpp"

namespace rwpcl {

using text::TokenizedExample;

struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t model_dim = 64;
  std::size_t heads = 2;
  std::size_t ff_dim = 128;
  std::size_t vocab_size = 0;
  std::size_t max_len = 64;
  std::size_t num_classes = 2;

  void validate() const {
    if (!layers || !model_dim || !heads || !ff_dim || !vocab_size || !max_len || !num_classes)
      throw ConfigError("encoder: all dimensions must be positive");
    if (model_dim % heads)
      throw ConfigError("encoder: model_dim " + std::to_string(model_dim) + " not divisible by heads " +
                        std::to_string(heads));
  }
};

template <typename T>
using ModelParams = ParamMap<T>;

inline std::string layer_prefix(std::size_t i) { return "layer" + std::to_string(i) + "."; }

/// Weights ~ U(-a, a) with a = sqrt(6 / (fan_in + fan_out)); biases and norm
/// shifts 0; norm scales 1. Each tensor draws from its own seed derived from
/// its name, so the result does not depend on construction order.
template <typename T>
ModelParams<T> init_encoder(const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams<T> p;
  const std::size_t d = cfg.model_dim;
  auto glorot = [&](const std::string& name, std::size_t fan_in, std::size_t fan_out) {
    Tensor<T> t({fan_in, fan_out});
    Rng rng(derive_seed(seed, name));
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-a, a);
    for (auto& v : t.values) v = static_cast<T>(u(rng));
    p.emplace(name, std::move(t));
  };
  auto constant = [&](const std::string& name, std::size_t n, T v) { p.emplace(name, Tensor<T>({n}, v)); };
  auto norm = [&](const std::string& prefix) {
    constant(prefix + ".scale", d, T(1));
    constant(prefix + ".shift", d, T(0));
  };
  auto linear = [&](const std::string& prefix, std::size_t in, std::size_t out) {
    glorot(prefix + ".weight", in, out);
    constant(prefix + ".bias", out, T(0));
  };

  glorot("embed.token", cfg.vocab_size, d);
  glorot("embed.position", cfg.max_len, d);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string pre = layer_prefix(l);
    norm(pre + "attn_norm");
    for (const char* m : {"query", "key", "value", "output"}) linear(pre + "attn." + m, d, d);
    norm(pre + "ffn_norm");
    linear(pre + "ffn.in", d, cfg.ff_dim);
    linear(pre + "ffn.out", cfg.ff_dim, d);
  }
  norm("final_norm");
  linear("classifier", d, cfg.num_classes);
  return p;
}

template <typename T>
struct EncoderOutput {
  Var<T> cls;     // [b, d]: final-layer representation at position 0
  Var<T> logits;  // [b, C]
};

namespace detail {

template <typename T>
const Tensor<T>& get(const ModelParams<T>& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw ContractError("encoder: missing parameter " + name);
  return it->second;
}

}  // namespace detail

/// Pre-norm transformer encoder with learned positional embeddings and an
/// affine classifier over the CLS position. Padded keys are excluded from
/// attention. Parameters enter the tape through Tape::param, so gradients can
/// be read back with Tape::grad_of.
template <typename T>
EncoderOutput<T> encoder_forward(Tape<T>& tape, const ModelParams<T>& params, const EncoderConfig& cfg,
                                 std::span<const TokenizedExample> batch) {
  if (batch.empty()) throw ContractError("encoder: empty batch");
  const std::size_t b = batch.size(), seq = batch[0].ids.size();
  if (seq == 0 || seq > cfg.max_len)
    throw InputError("encoder: sequence length " + std::to_string(seq) + " outside [1," + std::to_string(cfg.max_len) + "]");
  std::vector<std::size_t> tok(b * seq), pos(b * seq);
  std::vector<std::uint8_t> mask(b * seq);
  for (std::size_t e = 0; e < b; ++e) {
    const auto& ex = batch[e];
    if (ex.ids.size() != seq || ex.mask.size() != seq)
      throw InputError("encoder: example " + std::to_string(e) + " has length " + std::to_string(ex.ids.size()) +
                       ", batch length is " + std::to_string(seq));
    for (std::size_t i = 0; i < seq; ++i) {
      const auto id = ex.ids[i];
      if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size)
        throw InputError("encoder: example " + std::to_string(e) + " position " + std::to_string(i) + " has token id " +
                         std::to_string(id) + " outside vocabulary of size " + std::to_string(cfg.vocab_size));
      tok[e * seq + i] = static_cast<std::size_t>(id);
      pos[e * seq + i] = i;
      mask[e * seq + i] = ex.mask[i];
    }
  }

  auto P = [&](const std::string& name) { return tape.param(detail::get(params, name)); };
  auto linear = [&](Var<T> x, const std::string& prefix) {
    return ops::add(ops::matmul(x, P(prefix + ".weight")), P(prefix + ".bias"));
  };
  auto norm = [&](Var<T> x, const std::string& prefix) {
    return ops::add(ops::mul(ops::layernorm_rows(x), P(prefix + ".scale")), P(prefix + ".shift"));
  };

  Var<T> x = ops::add(ops::gather_rows(P("embed.token"), tok), ops::gather_rows(P("embed.position"), pos));
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string pre = layer_prefix(l);
    Var<T> h = norm(x, pre + "attn_norm");
    Var<T> a = ops::attention(linear(h, pre + "attn.query"), linear(h, pre + "attn.key"),
                              linear(h, pre + "attn.value"), mask, b, seq, cfg.heads);
    x = ops::add(x, linear(a, pre + "attn.output"));
    h = norm(x, pre + "ffn_norm");
    x = ops::add(x, linear(ops::relu(linear(h, pre + "ffn.in")), pre + "ffn.out"));
  }
  std::vector<std::size_t> cls_rows(b);
  for (std::size_t e = 0; e < b; ++e) cls_rows[e] = e * seq;
  // Row-wise norm commutes with row selection; normalizing only CLS rows is cheaper.
  Var<T> cls = norm(ops::gather_rows(x, cls_rows), "final_norm");
  return {cls, linear(cls, "classifier")};
}

/// softmax(logits) without recording gradients.
template <typename T>
Tensor<T> predict_proba(const ModelParams<T>& params, const EncoderConfig& cfg,
                        std::span<const TokenizedExample> batch) {
  Tape<T> tape(false);
  auto out = encoder_forward(tape, params, cfg, batch);
  return ops::softmax_rows(out.logits).value();
}

/// Row-wise argmax; ties resolve to the lowest class index.
template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& m) {
  const std::size_t c = m.cols(), r = m.size() / c;
  std::vector<int> out(r);
  for (std::size_t i = 0; i < r; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (m.values[i * c + j] > m.values[i * c + best]) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

}  // namespace rwpcl
