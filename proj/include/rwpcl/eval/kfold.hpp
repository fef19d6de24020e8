#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"
#include "rwpcl/core/parallel.hpp"
#include "rwpcl/eval/ensemble.hpp"
#include "rwpcl/eval/metrics.hpp"
#include "rwpcl/text/corpus.hpp"
#include "rwpcl/text/split.hpp"
#include "rwpcl/train/fit.hpp"

namespace rwpcl::eval {

struct KFoldOptions {
  EncoderConfig encoder;  // vocab_size is filled per fold
  TrainConfig train;
  std::size_t min_count = 2;
  double val_ratio = 0.1;  // share of each fold's training pool held out for early stopping
  std::size_t members = 1;  // models per fold, combined by probability averaging
  std::uint64_t master_seed = 0;
  std::size_t jobs = 1;
};

struct FoldReport {
  std::size_t fold = 0;
  std::vector<std::size_t> train_indices, val_indices, test_indices;
  MetricReport metrics;
  std::vector<std::vector<EpochRecord>> member_logs;
  std::string error;  // non-empty when the fold's trial failed
};

struct KFoldReport {
  std::vector<FoldReport> folds;
  double mean_f1 = 0.0;
  double std_f1 = 0.0;  // sample standard deviation over completed folds
  std::size_t completed = 0;
  std::vector<std::string> warnings;
};

inline std::string fold_seed_name(std::size_t fold, const char* what) {
  return "kfold/fold=" + std::to_string(fold) + "/" + what;
}

/// Trains on k-1 folds (minus a stratified validation slice), tests on the held
/// out fold, and aggregates macro-F1. With members > 1 each fold ensembles that
/// many independently seeded models before scoring. Failed folds are reported
/// and excluded from the aggregate.
inline KFoldReport kfold_evaluate(const text::Corpus& corpus, const text::FoldPlan& plan, const KFoldOptions& opt) {
  if (plan.assignment.size() != corpus.size())
    throw InputError("kfold: plan covers " + std::to_string(plan.assignment.size()) + " examples, corpus has " +
                     std::to_string(corpus.size()));
  if (opt.members < 1) throw ConfigError("kfold: members must be >= 1");
  KFoldReport rep;
  rep.folds.resize(plan.k);
  parallel_for(plan.k, opt.jobs, [&](std::size_t f) {
    FoldReport& fr = rep.folds[f];
    fr.fold = f;
    fr.test_indices = plan.test_indices(f);
    try {
      const auto pool = plan.train_indices(f);
      std::vector<int> pool_labels;
      for (auto i : pool) pool_labels.push_back(corpus.labels[i]);
      const double ratios[] = {1.0 - opt.val_ratio, opt.val_ratio};
      auto parts = text::stratified_split(pool_labels, ratios, derive_seed(opt.master_seed, fold_seed_name(f, "val")));
      for (auto i : parts[0]) fr.train_indices.push_back(pool[i]);
      for (auto i : parts[1]) fr.val_indices.push_back(pool[i]);
      if (fr.test_indices.empty()) throw ConfigError("fold has no test examples");

      const auto vocab = text::build_vocabulary(corpus, fr.train_indices, opt.min_count);
      EncoderConfig enc = opt.encoder;
      enc.vocab_size = vocab.size();
      enc.num_classes = static_cast<std::size_t>(corpus.num_classes);
      const auto train = text::tokenize_subset(corpus, fr.train_indices, vocab, enc.max_len);
      const auto val = text::tokenize_subset(corpus, fr.val_indices, vocab, enc.max_len);
      const auto test = text::tokenize_subset(corpus, fr.test_indices, vocab, enc.max_len);

      std::vector<ProbabilityMatrix> probs;
      for (std::size_t m = 0; m < opt.members; ++m) {
        TrainConfig cfg = opt.train;
        cfg.seed = derive_seed(opt.master_seed, fold_seed_name(f, ("member=" + std::to_string(m)).c_str()));
        FitResult fit_res = fit(train, val, enc, cfg);
        probs.push_back({"fold" + std::to_string(f) + "/member" + std::to_string(m),
                         predict_proba_all(fit_res.best_model, enc, test, cfg.eval_batch_size).cast<double>()});
        fr.member_logs.push_back(std::move(fit_res.log));
      }
      const auto ens = ensemble(probs);
      fr.metrics = macro_report(batch_labels(test), ens.labels, enc.num_classes);
    } catch (const std::exception& e) {
      fr.error = e.what();
    }
  });
  std::vector<double> f1s;
  for (const auto& fr : rep.folds) {
    if (fr.error.empty())
      f1s.push_back(fr.metrics.macro_f1);
    else
      rep.warnings.push_back("fold " + std::to_string(fr.fold) + " failed: " + fr.error);
  }
  rep.completed = f1s.size();
  if (!f1s.empty()) {
    double s = 0.0;
    for (double v : f1s) s += v;
    rep.mean_f1 = s / static_cast<double>(f1s.size());
    if (f1s.size() > 1) {
      double ss = 0.0;
      for (double v : f1s) ss += (v - rep.mean_f1) * (v - rep.mean_f1);
      rep.std_f1 = std::sqrt(ss / static_cast<double>(f1s.size() - 1));
    }
  }
  if (rep.completed < plan.k) rep.warnings.push_back("aggregate covers " + std::to_string(rep.completed) + " of " +
                                                     std::to_string(plan.k) + " folds");
  return rep;
}

inline nlohmann::json to_json(const KFoldReport& r) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : r.folds) {
    nlohmann::json j{{"fold", f.fold},
                     {"train_size", f.train_indices.size()},
                     {"val_size", f.val_indices.size()},
                     {"test_indices", f.test_indices}};
    if (f.error.empty())
      j["metrics"] = to_json(f.metrics);
    else
      j["error"] = f.error;
    folds.push_back(std::move(j));
  }
  return {{"folds", folds},
          {"mean_macro_f1", r.mean_f1},
          {"std_macro_f1", r.std_f1},
          {"completed_folds", r.completed},
          {"warnings", r.warnings}};
}

}  // namespace rwpcl::eval
