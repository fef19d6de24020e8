#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rwpcl/cli/config.hpp"
#include "rwpcl/cli/manifest.hpp"
#include "rwpcl/cli/synth.hpp"
#include "rwpcl/core/parallel.hpp"
#include "rwpcl/eval/ensemble.hpp"
#include "rwpcl/eval/kfold.hpp"
#include "rwpcl/model/checkpoint.hpp"
#include "rwpcl/text/corpus.hpp"
#include "rwpcl/text/split.hpp"
#include "rwpcl/train/gradcheck_suite.hpp"
#include "rwpcl/train/grid.hpp"

#ifndef RWPCL_DATA_DIR
#define RWPCL_DATA_DIR "data"
#endif

namespace rwpcl::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,     // bad flags, unknown or malformed config keys
  kExitIo = 3,        // missing or unwritable files
  kExitInput = 4,     // malformed data, shape or contract violations
  kExitTraining = 5,  // a trial diverged (non-finite loss)
  kExitVerify = 6,    // gradient check above threshold
};

/// One-line machine-parsable error record.
inline void print_error(std::ostream& err, const char* code, int exit_code, const std::string& message) {
  err << "error: code=" << code << " exit=" << exit_code << " message=" << nlohmann::json(message).dump() << '\n';
}

struct Context {
  Config cfg;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  bool deterministic = false;
  std::string out_dir = ".";
  std::ostream* out = &std::cout;
  std::ostream* err = &std::cerr;
  ExperimentManifest manifest;

  std::string path(const std::string& name) const { return (fs::path(out_dir) / name).string(); }

  void begin(const std::string& command) {
    manifest.command = command;
    manifest.seed = seed;
    manifest.jobs = jobs;
    manifest.deterministic = deterministic;
    manifest.config = cfg.to_json();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory: " + out_dir);
  }
  void output(const std::string& p) { manifest.outputs.push_back(p); }
  void use_dataset(const std::string& p) {
    manifest.dataset = p;
    manifest.dataset_checksum = file_checksum(p);
  }
  void finish(const Stopwatch& total) {
    manifest.timings.emplace_back("total", total.seconds());
    const auto p = path("manifest.json");
    manifest.outputs.push_back(p);
    manifest.save(p);
  }
};

inline void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << body;
  if (!out) throw IoError("write failed: " + path);
}

inline void write_json(const std::string& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

inline void write_jsonl(const std::string& path, const std::vector<nlohmann::json>& rows) {
  std::string body;
  for (const auto& r : rows) body += r.dump() + "\n";
  write_text(path, body);
}

inline std::vector<nlohmann::json> epoch_rows(const std::vector<EpochRecord>& log, const nlohmann::json& tag = {}) {
  std::vector<nlohmann::json> rows;
  for (const auto& r : log) {
    nlohmann::json j = to_json(r);
    if (tag.is_object()) j.insert(tag.begin(), tag.end());
    rows.push_back(std::move(j));
  }
  return rows;
}

inline SyntheticSpec synthetic_spec(const Config& c, std::uint64_t seed) {
  SyntheticSpec s;
  s.examples = c.size("synth_examples");
  s.classes = c.size("synth_classes");
  s.vocab_size = c.size("synth_vocab");
  s.signal_tokens = c.size("synth_signal_tokens");
  s.noise_rate = c.num("synth_noise_rate");
  s.flip_rate = c.num("synth_flip_rate");
  s.min_words = c.size("synth_min_words");
  s.max_words = c.size("synth_max_words");
  s.decorate = c.flag("synth_decorate");
  s.seed = seed;
  return s;
}

/// Dataset after cleaning, emoji conversion, stratified split and tokenization.
struct Prepared {
  text::Dataset dataset;
  text::Corpus corpus;
  text::SplitIndices split;
  text::Vocabulary vocab;
  std::vector<TokenizedExample> train, val, test;
  std::vector<std::string> warnings;
  EncoderConfig encoder;
};

inline text::EmojiTable load_emoji_table(const Config& c) {
  const std::string p = c.str("emoji_table").empty() ? std::string(RWPCL_DATA_DIR) + "/emoji_names.tsv" : c.str("emoji_table");
  return text::EmojiTable::load(p);
}

inline text::Corpus corpus_from(const text::Dataset& ds, const Config& c) {
  const auto table = load_emoji_table(c);
  text::Preprocessor pre;
  pre.clean_options.keep_hashtag_text = c.flag("keep_hashtag_text");
  pre.emoji = &table;
  return text::prepare_corpus(ds, pre);
}

inline std::string require_dataset(Context& ctx) {
  const std::string p = ctx.cfg.str("dataset");
  if (p.empty()) throw ConfigError("no dataset given (use --dataset or the 'dataset' key)");
  ctx.use_dataset(p);
  return p;
}

inline Prepared prepare(Context& ctx) {
  Prepared p;
  p.dataset = text::load_dataset(require_dataset(ctx));
  p.corpus = corpus_from(p.dataset, ctx.cfg);
  p.split = text::split(p.corpus.labels, {ctx.cfg.num("split_train"), ctx.cfg.num("split_val"), ctx.cfg.num("split_test")},
                        derive_seed(ctx.seed, "split"));
  p.vocab = text::build_vocabulary(p.corpus, p.split.train, ctx.cfg.size("min_count"));
  p.encoder = encoder_config(ctx.cfg);
  p.encoder.vocab_size = p.vocab.size();
  p.encoder.num_classes = static_cast<std::size_t>(p.dataset.num_classes);
  p.encoder.validate();
  p.train = text::tokenize_subset(p.corpus, p.split.train, p.vocab, p.encoder.max_len, &p.warnings);
  p.val = text::tokenize_subset(p.corpus, p.split.val, p.vocab, p.encoder.max_len, &p.warnings);
  p.test = text::tokenize_subset(p.corpus, p.split.test, p.vocab, p.encoder.max_len, &p.warnings);
  return p;
}

// ---------------------------------------------------------------- synth

inline int cmd_synth(Context& ctx, std::string out_path) {
  Stopwatch sw;
  ctx.begin("synth");
  if (out_path.empty()) out_path = ctx.path("synth.jsonl");
  const auto ds = generate_synthetic(synthetic_spec(ctx.cfg, derive_seed(ctx.seed, "synth")));
  text::save_dataset(out_path, ds);
  ctx.output(out_path);
  ctx.use_dataset(out_path);
  std::size_t flipped = 0;
  for (const auto& p : ds.posts) flipped += p.label != *p.clean_label;
  *ctx.out << "synth: " << ds.posts.size() << " posts, " << ds.num_classes << " classes, " << flipped
           << " flipped labels -> " << out_path << '\n';
  ctx.finish(sw);
  return kExitOk;
}

// ---------------------------------------------------------------- preprocess

inline int cmd_preprocess(Context& ctx) {
  Stopwatch sw;
  ctx.begin("preprocess");
  const Prepared p = prepare(ctx);
  const auto vocab_path = ctx.path("vocab.tsv");
  p.vocab.save(vocab_path);
  ctx.output(vocab_path);

  std::vector<nlohmann::json> rows;
  auto add = [&](const char* part, const std::vector<std::size_t>& idx, const std::vector<TokenizedExample>& ex) {
    for (std::size_t k = 0; k < idx.size(); ++k)
      rows.push_back({{"split", part}, {"index", idx[k]}, {"ids", ex[k].ids}, {"mask", ex[k].mask}, {"label", ex[k].label}});
  };
  add("train", p.split.train, p.train);
  add("val", p.split.val, p.val);
  add("test", p.split.test, p.test);
  const auto tok_path = ctx.path("tokenized.jsonl");
  write_jsonl(tok_path, rows);
  ctx.output(tok_path);

  const auto report_path = ctx.path("preprocess.json");
  write_json(report_path, {{"examples", p.corpus.size()},
                           {"vocab_size", p.vocab.size()},
                           {"max_len", p.encoder.max_len},
                           {"split", {{"train", p.split.train}, {"val", p.split.val}, {"test", p.split.test}}},
                           {"warnings", p.warnings}});
  ctx.output(report_path);
  *ctx.out << "preprocess: " << p.corpus.size() << " posts, vocab " << p.vocab.size() << ", split " << p.train.size()
           << "/" << p.val.size() << "/" << p.test.size() << ", " << p.warnings.size() << " warnings\n";
  ctx.finish(sw);
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainOutcome {
  std::string variant;
  FitResult fit;
  eval::MetricReport test;
  std::optional<eval::MetricReport> test_clean;  // against pre-noise labels, when the dataset has them
  double train_seconds = 0.0;
};

/// fit() on the prepared split, then writes metrics.jsonl, checkpoint.rwpc,
/// probs_test.jsonl, test_labels.json and report.json under `dir`.
inline TrainOutcome train_one(Context& ctx, const Prepared& p, const TrainConfig& cfg, const std::string& variant,
                              const std::string& model_id, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir);
  TrainOutcome o;
  o.variant = variant;
  const Stopwatch sw;
  o.fit = fit(p.train, p.val, p.encoder, cfg);
  o.train_seconds = sw.seconds();
  const auto probs = predict_proba_all(o.fit.best_model, p.encoder, p.test, cfg.eval_batch_size);
  const auto pred = argmax_rows(probs);
  const auto gold = batch_labels(p.test);
  o.test = eval::macro_report(gold, pred, p.encoder.num_classes);
  bool has_clean = !p.split.test.empty();
  std::vector<int> clean_gold;
  for (auto i : p.split.test) {
    if (!p.dataset.posts[i].clean_label) has_clean = false;
    else clean_gold.push_back(*p.dataset.posts[i].clean_label);
  }
  if (has_clean) o.test_clean = eval::macro_report(clean_gold, pred, p.encoder.num_classes);

  auto f = [&](const char* n) { return (fs::path(dir) / n).string(); };
  write_jsonl(f("metrics.jsonl"), epoch_rows(o.fit.log));
  save_checkpoint(f("checkpoint.rwpc"), o.fit.checkpoint_tensors());
  const eval::ProbabilityMatrix pm{model_id, probs.cast<double>()};
  eval::save_probabilities(f("probs_test.jsonl"), std::span(&pm, 1));
  write_json(f("test_labels.json"), gold);
  nlohmann::json rep{{"variant", variant},
                     {"model_id", model_id},
                     {"best_epoch", o.fit.best_epoch},
                     {"best_val_macro_f1", o.fit.best_val_f1},
                     {"epochs_run", o.fit.log.size()},
                     {"steps", o.fit.steps},
                     {"stopped_early", o.fit.stopped_early},
                     {"loss_identity_violations", o.fit.identity_violations},
                     {"train_seconds", o.train_seconds},
                     {"test", to_json(o.test)}};
  if (o.test_clean) rep["test_clean_labels"] = to_json(*o.test_clean);
  write_json(f("report.json"), rep);
  for (const char* n : {"metrics.jsonl", "checkpoint.rwpc", "probs_test.jsonl", "test_labels.json", "report.json"})
    ctx.output(f(n));
  return o;
}

inline std::string percent(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * v;
  return os.str();
}

inline int cmd_train(Context& ctx, bool ablation, const std::string& model_id) {
  Stopwatch sw;
  ctx.begin(ablation ? "train --ablation" : "train");
  const Prepared p = prepare(ctx);
  p.vocab.save(ctx.path("vocab.tsv"));
  ctx.output(ctx.path("vocab.tsv"));
  const TrainConfig base = train_config(ctx.cfg, derive_seed(ctx.seed, "train"));

  if (!ablation) {
    const auto o = train_one(ctx, p, base, "configured", model_id, ctx.out_dir);
    *ctx.out << "train: best epoch " << o.fit.best_epoch << ", val macro-F1 " << percent(o.fit.best_val_f1)
             << ", test macro-F1 " << percent(o.test.macro_f1) << '\n';
    ctx.finish(sw);
    return kExitOk;
  }

  // Same trial seed for all three variants, so only the stream switches differ.
  struct Variant {
    const char* name;
    const char* dir;
    bool rwp, cl;
  };
  const Variant variants[] = {{"Baseline", "baseline", false, false}, {"RWP", "rwp", true, false}, {"RWP+CL", "rwp_cl", true, true}};
  std::vector<TrainOutcome> outcomes(3);
  std::vector<std::string> errors(3);
  std::vector<Context> sub(3, ctx);
  parallel_for(3, ctx.jobs, [&](std::size_t i) {
    TrainConfig cfg = base;
    cfg.rwp = variants[i].rwp;
    cfg.cl = variants[i].cl;
    sub[i].manifest.outputs.clear();
    outcomes[i] = train_one(sub[i], p, cfg, variants[i].name, model_id + "/" + variants[i].dir, ctx.path(variants[i].dir));
  });
  for (auto& s : sub) ctx.manifest.outputs.insert(ctx.manifest.outputs.end(), s.manifest.outputs.begin(), s.manifest.outputs.end());

  const std::string model = "encoder L=" + std::to_string(p.encoder.layers) + " d=" + std::to_string(p.encoder.model_dim);
  std::string table = "Dataset\tModel\tBaseline\tRWP\tRWP+CL\n" + p.dataset.name + "\t" + model;
  for (const auto& o : outcomes) table += "\t" + percent(o.test.macro_f1);
  table += "\n";
  const auto table_path = ctx.path("ablation.tsv");
  write_text(table_path, table);
  ctx.output(table_path);
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& o : outcomes) {
    nlohmann::json j{{"variant", o.variant},
                     {"best_val_macro_f1", o.fit.best_val_f1},
                     {"test_macro_f1", o.test.macro_f1},
                     {"test_macro_precision", o.test.macro_precision},
                     {"test_macro_recall", o.test.macro_recall},
                     {"loss_identity_violations", o.fit.identity_violations},
                     {"steps", o.fit.steps},
                     {"epochs_run", o.fit.log.size()},
                     {"train_seconds", o.train_seconds}};
    if (o.test_clean) j["test_clean_macro_f1"] = o.test_clean->macro_f1;
    rows.push_back(std::move(j));
  }
  write_json(ctx.path("ablation.json"), {{"dataset", p.dataset.name}, {"model", model}, {"variants", rows}});
  ctx.output(ctx.path("ablation.json"));
  *ctx.out << table;
  ctx.finish(sw);
  return kExitOk;
}

// ---------------------------------------------------------------- grid

inline int cmd_grid(Context& ctx) {
  Stopwatch sw;
  ctx.begin("grid");
  const Prepared p = prepare(ctx);
  const TrainConfig base = train_config(ctx.cfg, 0);
  const auto res = grid_search(p.train, p.val, p.encoder, base, grid_spec(ctx.cfg), derive_seed(ctx.seed, "grid"), ctx.jobs);
  const auto table = render_grid_table(res);
  write_text(ctx.path("grid_table.tsv"), table);
  write_json(ctx.path("grid.json"), to_json(res));
  std::vector<nlohmann::json> rows;
  for (std::size_t i = 0; i < res.cells.size(); ++i) {
    const auto& c = res.cells[i];
    auto r = epoch_rows(res.logs[i], {{"cell", grid_cell_name(c.batch_size, c.epsilon, c.lambda)}});
    rows.insert(rows.end(), r.begin(), r.end());
  }
  write_jsonl(ctx.path("grid_metrics.jsonl"), rows);
  for (const char* n : {"grid_table.tsv", "grid.json", "grid_metrics.jsonl"}) ctx.output(ctx.path(n));
  const auto& best = res.cells[res.ranking.front()];
  *ctx.out << table << "grid: " << res.cells.size() << " cells, best b=" << best.batch_size
           << " epsilon=" << format_number(best.epsilon) << " lambda=" << format_number(best.lambda)
           << " val macro-F1 " << percent(best.val_f1) << '\n';
  ctx.finish(sw);
  return kExitOk;
}

// ---------------------------------------------------------------- kfold

inline int cmd_kfold(Context& ctx) {
  Stopwatch sw;
  ctx.begin("kfold");
  const auto ds = text::load_dataset(require_dataset(ctx));
  const auto corpus = corpus_from(ds, ctx.cfg);
  const auto plan = text::kfold(corpus.labels, ctx.cfg.size("folds"), derive_seed(ctx.seed, "kfold"));
  eval::KFoldOptions opt;
  opt.encoder = encoder_config(ctx.cfg);
  opt.train = train_config(ctx.cfg, 0);
  opt.min_count = ctx.cfg.size("min_count");
  opt.val_ratio = ctx.cfg.num("fold_val_ratio");
  opt.members = ctx.cfg.size("fold_members");
  opt.master_seed = derive_seed(ctx.seed, "kfold");
  opt.jobs = ctx.jobs;
  const auto rep = eval::kfold_evaluate(corpus, plan, opt);
  write_json(ctx.path("kfold.json"), eval::to_json(rep));
  std::vector<nlohmann::json> rows;
  for (const auto& f : rep.folds)
    for (std::size_t m = 0; m < f.member_logs.size(); ++m) {
      auto r = epoch_rows(f.member_logs[m], {{"fold", f.fold}, {"member", m}});
      rows.insert(rows.end(), r.begin(), r.end());
    }
  write_jsonl(ctx.path("kfold_metrics.jsonl"), rows);
  for (const char* n : {"kfold.json", "kfold_metrics.jsonl"}) ctx.output(ctx.path(n));
  for (const auto& f : rep.folds) {
    *ctx.out << "fold " << f.fold << ": ";
    if (f.error.empty())
      *ctx.out << "test " << f.test_indices.size() << " macro-F1 " << percent(f.metrics.macro_f1) << '\n';
    else
      *ctx.out << "failed: " << f.error << '\n';
  }
  *ctx.out << "kfold: macro-F1 " << percent(rep.mean_f1) << " +/- " << percent(rep.std_f1) << " over " << rep.completed
           << " folds\n";
  for (const auto& w : rep.warnings) *ctx.out << "warning: " << w << '\n';
  ctx.finish(sw);
  if (rep.completed == 0) throw TrainingError("every fold failed; first: " + rep.folds.front().error);
  return kExitOk;
}

// ---------------------------------------------------------------- ensemble

inline int cmd_ensemble(Context& ctx, const std::vector<std::string>& prob_files, const std::string& labels_file) {
  Stopwatch sw;
  ctx.begin("ensemble");
  std::vector<eval::ProbabilityMatrix> models;
  for (const auto& f : prob_files)
    for (auto& m : eval::load_probabilities(f)) models.push_back(std::move(m));
  const auto res = eval::ensemble(models);
  const std::size_t c = res.mean_probs.cols();
  std::vector<nlohmann::json> rows;
  for (std::size_t i = 0; i < res.labels.size(); ++i) {
    std::vector<double> row(res.mean_probs.values.begin() + i * c, res.mean_probs.values.begin() + (i + 1) * c);
    rows.push_back({{"index", i}, {"label", res.labels[i]}, {"probs", row}});
  }
  write_jsonl(ctx.path("ensemble.jsonl"), rows);
  ctx.output(ctx.path("ensemble.jsonl"));
  nlohmann::json report{{"models", nlohmann::json::array()}, {"examples", res.labels.size()}, {"classes", c}};
  for (const auto& m : models) report["models"].push_back(m.model_id);
  if (!labels_file.empty()) {
    ctx.use_dataset(labels_file);
    std::ifstream in(labels_file);
    if (!in) throw IoError("cannot open labels file: " + labels_file);
    std::vector<int> gold;
    try {
      gold = nlohmann::json::parse(in).get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
      throw InputError(labels_file + ": expected a JSON array of integer labels (" + e.what() + ")");
    }
    if (gold.size() != res.labels.size())
      throw InputError(labels_file + ": " + std::to_string(gold.size()) + " labels for " +
                       std::to_string(res.labels.size()) + " examples");
    for (int g : gold)
      if (g < 0 || static_cast<std::size_t>(g) >= c) throw InputError(labels_file + ": label out of range");
    const auto m = eval::macro_report(gold, res.labels, c);
    report["metrics"] = to_json(m);
    *ctx.out << "ensemble: " << models.size() << " models, macro-F1 " << percent(m.macro_f1) << '\n';
  } else {
    *ctx.out << "ensemble: " << models.size() << " models, " << res.labels.size() << " predictions\n";
  }
  write_json(ctx.path("ensemble_report.json"), report);
  ctx.output(ctx.path("ensemble_report.json"));
  ctx.finish(sw);
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

inline int cmd_gradcheck(Context& ctx) {
  Stopwatch sw;
  ctx.begin("gradcheck");
  const auto res = run_gradcheck_suite(derive_seed(ctx.seed, "gradcheck"));
  write_json(ctx.path("gradcheck.json"), to_json(res));
  ctx.output(ctx.path("gradcheck.json"));
  for (const char* g : {"op", "encoder", "projection", "train_step"}) {
    double thr = 0.0;
    for (const auto& e : res.entries)
      if (e.group == g) thr = e.threshold;
    *ctx.out << "gradcheck " << g << ": max rel error " << std::scientific << std::setprecision(3)
             << res.max_rel_error(g) << " (threshold " << thr << ")" << std::defaultfloat << '\n';
  }
  for (const auto& e : res.entries)
    if (!e.passed()) *ctx.out << "  FAILED " << e.name << ": " << e.report.worst << '\n';
  ctx.manifest.timings.emplace_back("gradcheck", sw.seconds());
  ctx.finish(sw);
  if (!res.passed()) {
    print_error(*ctx.err, "verification", kExitVerify, "gradient check above threshold");
    return kExitVerify;
  }
  *ctx.out << "gradcheck: all " << res.entries.size() << " checks passed\n";
  return kExitOk;
}

// ---------------------------------------------------------------- entry

inline std::string help_footer() {
  std::ostringstream os;
  os << "Config keys (key=value lines in --config, or --set key=value; flags win over both):\n";
  auto type_of = [](const KeyDef& k) {
    if (k.type != KeyType::choice) return std::string(type_name(k.type));
    std::string t;
    for (const auto& c : k.choices) t += (t.empty() ? "" : "|") + c;
    return t;
  };
  auto default_of = [](const KeyDef& k) { return k.default_value.empty() ? std::string("\"\"") : k.default_value; };
  std::size_t w = 4, tw = 4, dw = 7;
  for (const auto& k : config_keys()) {
    w = std::max(w, k.name.size());
    tw = std::max(tw, type_of(k).size());
    dw = std::max(dw, default_of(k).size());
  }
  os << std::left << "  " << std::setw(static_cast<int>(w)) << "key" << "  " << std::setw(static_cast<int>(tw)) << "type"
     << "  " << std::setw(static_cast<int>(dw)) << "default" << "  description\n";
  for (const auto& k : config_keys())
    os << "  " << std::setw(static_cast<int>(w)) << k.name << "  " << std::setw(static_cast<int>(tw)) << type_of(k)
       << "  " << std::setw(static_cast<int>(dw)) << default_of(k) << "  " << k.description << '\n';
  os << "\nExit codes:\n"
        "  0  success\n"
        "  1  internal error\n"
        "  2  usage or configuration error (unknown key, bad value, bad flag)\n"
        "  3  I/O error (missing or unwritable file)\n"
        "  4  invalid input or violated invariant (malformed data, shape or contract error)\n"
        "  5  training failure (non-finite loss)\n"
        "  6  gradient check above threshold\n"
        "Errors are reported on stderr as: error: code=<kind> exit=<n> message=\"...\"\n";
  return os.str();
}

/// Runs one command line (args excludes the program name). Returns the exit code.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Transformer text classification with random weight perturbation and Barlow Twins training.", "rwpcl"};
  app.footer(help_footer());
  app.require_subcommand(1);
  app.fallthrough();
  app.get_formatter()->column_width(34);

  std::string config_file, out_dir = ".";
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  bool deterministic = false;
  app.add_option("--config", config_file, "flat key=value config file");
  app.add_option("--set", sets, "override one config key (repeatable)")->type_name("KEY=VALUE");
  app.add_option("--seed", seed, "master seed (overrides the 'seed' key)");
  app.add_option("--jobs", jobs, "concurrent trials (overrides the 'jobs' key)");
  app.add_flag("--deterministic", deterministic, "single worker; equal seeds give byte-identical metric logs");
  app.add_option("--out-dir", out_dir, "directory for artifacts and manifest.json")->capture_default_str();

  std::string synth_out, dataset, model_id = "model", labels_file;
  bool ablation = false;
  std::vector<std::string> prob_files;
  auto* synth = app.add_subcommand("synth", "generate a synthetic labelled corpus");
  synth->add_option("--out", synth_out, "dataset path (default: <out-dir>/synth.jsonl)");
  auto* preprocess = app.add_subcommand("preprocess", "clean, tokenize and split a dataset; write vocabulary and ids");
  auto* train = app.add_subcommand("train", "train one model; write checkpoint, metric log and test report");
  auto* grid = app.add_subcommand("grid", "grid search over batch size, epsilon and lambda");
  auto* kfold = app.add_subcommand("kfold", "stratified k-fold cross-validation");
  for (auto* sc : {preprocess, train, grid, kfold})
    sc->add_option("--dataset", dataset, "JSON-lines dataset (overrides the 'dataset' key)");
  train->add_flag("--ablation", ablation, "train Baseline, RWP and RWP+CL variants and write an ablation table");
  train->add_option("--model-id", model_id, "identifier stored in the probability file")->capture_default_str();
  auto* ens = app.add_subcommand("ensemble", "average class probabilities of several models");
  ens->add_option("--probs", prob_files, "probability files (JSON-lines)")->required();
  ens->add_option("--labels", labels_file, "JSON array of gold labels for scoring");
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every gradient");

  std::vector<std::string> argv_store{"rwpcl"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    print_error(err, "usage", kExitUsage, e.what());
    return kExitUsage;
  }

  try {
    Context ctx;
    ctx.out = &out;
    ctx.err = &err;
    if (!config_file.empty()) ctx.cfg.load_file(config_file);
    for (const auto& s : sets) ctx.cfg.set_assignment(s);
    if (seed) ctx.cfg.set("seed", std::to_string(*seed), "--seed");
    if (jobs) ctx.cfg.set("jobs", std::to_string(*jobs), "--jobs");
    if (!dataset.empty()) ctx.cfg.set("dataset", dataset, "--dataset");
    if (deterministic) ctx.cfg.set("jobs", "1", "--deterministic");
    ctx.seed = ctx.cfg.size("seed");
    ctx.jobs = std::max<std::size_t>(1, ctx.cfg.size("jobs"));
    ctx.deterministic = deterministic;
    ctx.out_dir = out_dir;

    if (*synth) return cmd_synth(ctx, synth_out);
    if (*preprocess) return cmd_preprocess(ctx);
    if (*train) return cmd_train(ctx, ablation, model_id);
    if (*grid) return cmd_grid(ctx);
    if (*kfold) return cmd_kfold(ctx);
    if (*ens) return cmd_ensemble(ctx, prob_files, labels_file);
    if (*gradcheck) return cmd_gradcheck(ctx);
    print_error(err, "usage", kExitUsage, "no command given");
    return kExitUsage;
  } catch (const ConfigError& e) {
    print_error(err, "config", kExitUsage, e.what());
    return kExitUsage;
  } catch (const IoError& e) {
    print_error(err, "io", kExitIo, e.what());
    return kExitIo;
  } catch (const TrainingError& e) {
    print_error(err, "training", kExitTraining, e.what());
    return kExitTraining;
  } catch (const Error& e) {
    print_error(err, e.code().c_str(), kExitInput, e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    print_error(err, "internal", kExitInternal, e.what());
    return kExitInternal;
  }
}

}  // namespace rwpcl::cli
