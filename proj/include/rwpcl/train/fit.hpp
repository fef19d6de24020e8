#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rwpcl/eval/metrics.hpp"
#include "rwpcl/train/step.hpp"

namespace rwpcl {

struct EpochRecord {
  std::size_t epoch = 0;
  double ce1 = 0.0, ce2 = 0.0, bt = 0.0, total = 0.0;  // means over the epoch's steps
  double val_macro_f1 = 0.0, val_precision = 0.0, val_recall = 0.0;
};

inline nlohmann::json to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"ce1", r.ce1},
          {"ce2", r.ce2},
          {"bt", r.bt},
          {"total", r.total},
          {"val_macro_f1", r.val_macro_f1},
          {"val_precision", r.val_precision},
          {"val_recall", r.val_recall}};
}

/// Patience counter on validation macro-F1. Only a strict improvement resets it.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Returns true when `f1` is a new best.
  bool update(std::size_t epoch, double f1) {
    if (f1 > best_) {
      best_ = f1;
      best_epoch_ = epoch;
      since_best_ = 0;
      return true;
    }
    ++since_best_;
    return false;
  }
  bool should_stop() const noexcept { return since_best_ >= patience_; }
  double best() const noexcept { return best_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  std::size_t since_best() const noexcept { return since_best_; }

 private:
  std::size_t patience_;
  double best_ = -std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
};

/// Class probabilities for every example, evaluated in chunks.
template <typename T>
Tensor<T> predict_proba_all(const ModelParams<T>& params, const EncoderConfig& enc,
                            std::span<const TokenizedExample> examples, std::size_t chunk = 64) {
  if (examples.empty()) throw ContractError("predict_proba_all: no examples");
  Tensor<T> out({examples.size(), enc.num_classes});
  for (std::size_t start = 0; start < examples.size(); start += chunk) {
    const std::size_t n = std::min(chunk, examples.size() - start);
    Tensor<T> p = predict_proba(params, enc, examples.subspan(start, n));
    std::copy(p.values.begin(), p.values.end(), out.values.begin() + start * enc.num_classes);
  }
  return out;
}

template <typename T>
eval::MetricReport evaluate(const ModelParams<T>& params, const EncoderConfig& enc,
                            std::span<const TokenizedExample> examples, std::size_t chunk = 64) {
  const auto pred = argmax_rows(predict_proba_all(params, enc, examples, chunk));
  return eval::macro_report(batch_labels(examples), pred, enc.num_classes);
}

struct FitOptions {
  std::function<void(const StepReport&)> on_step;
};

struct FitResult {
  ModelParams<float> best_model;
  ProjectionParams<float> best_projection;
  std::size_t best_epoch = 0;
  double best_val_f1 = 0.0;
  std::vector<EpochRecord> log;
  std::size_t steps = 0;
  std::size_t identity_violations = 0;
  bool stopped_early = false;

  /// Encoder and projection tensors in one map, as written to checkpoints.
  ParamMap<float> checkpoint_tensors() const {
    ParamMap<float> all = best_model;
    for (auto& [k, v] : best_projection.to_tensors()) all.emplace(k, v);
    return all;
  }
};

/// Mini-batch order for one epoch: a permutation seeded from (trial seed, epoch).
/// A trailing batch of one example is dropped (batch norm needs two rows).
inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                           std::uint64_t trial_seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(trial_seed, "shuffle/epoch/" + std::to_string(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < n; s += batch_size) {
    const std::size_t e = std::min(n, s + batch_size);
    if (e - s < 2) break;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s), order.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return out;
}

/// Trains for at most cfg.epochs epochs, evaluating validation macro-F1 after
/// each and keeping the best epoch's parameters. Stops once the best score has
/// not improved for cfg.patience consecutive epochs.
inline FitResult fit(std::span<const TokenizedExample> train, std::span<const TokenizedExample> val,
                     const EncoderConfig& enc, const TrainConfig& cfg, const FitOptions& opt = {}) {
  if (train.size() < 2) throw ConfigError("fit: training set needs at least 2 examples");
  if (val.empty()) throw ConfigError("fit: validation set is empty");
  cfg.validate();
  enc.validate();

  TrainState<float> st = init_train_state<float>(enc, cfg);
  EarlyStopping stopper(cfg.patience);
  FitResult res;
  std::vector<TokenizedExample> batch;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t steps = 0;
    for (const auto& idx : epoch_batches(train.size(), cfg.batch_size, st.trial_seed, epoch)) {
      batch.clear();
      for (auto i : idx) batch.push_back(train[i]);
      StepReport r = train_step(st, std::span<const TokenizedExample>(batch), enc, cfg);
      if (opt.on_step) opt.on_step(r);
      if (!r.finite)
        throw TrainingError("non-finite loss at step " + std::to_string(r.step) + " (ce1=" + std::to_string(r.ce1) +
                            " ce2=" + std::to_string(r.ce2) + " bt=" + std::to_string(r.bt) +
                            " grad_norm=" + std::to_string(r.grad_norm) + ")");
      if (!r.identity_holds()) ++res.identity_violations;
      rec.ce1 += r.ce1;
      rec.ce2 += r.ce2;
      rec.bt += r.bt;
      rec.total += r.total;
      ++steps;
    }
    res.steps += steps;
    if (steps) {
      rec.ce1 /= static_cast<double>(steps);
      rec.ce2 /= static_cast<double>(steps);
      rec.bt /= static_cast<double>(steps);
      rec.total /= static_cast<double>(steps);
    }
    const auto m = evaluate(st.model, enc, val, cfg.eval_batch_size);
    rec.val_macro_f1 = m.macro_f1;
    rec.val_precision = m.macro_precision;
    rec.val_recall = m.macro_recall;
    res.log.push_back(rec);
    if (stopper.update(epoch, m.macro_f1)) {
      res.best_model = st.model;
      res.best_projection = st.projection;
    }
    if (stopper.should_stop()) {
      res.stopped_early = epoch < cfg.epochs;
      break;
    }
  }
  res.best_epoch = stopper.best_epoch();
  res.best_val_f1 = stopper.best();
  return res;
}

}  // namespace rwpcl
