#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "rwpcl/cli/synth.hpp"
#include "rwpcl/text/corpus.hpp"
#include "rwpcl/text/split.hpp"
#include "rwpcl/train/fit.hpp"
#include "rwpcl/train/gradcheck_suite.hpp"
#include "rwpcl/train/grid.hpp"

using namespace rwpcl;

namespace {

struct Data {
  EncoderConfig enc;
  std::vector<TokenizedExample> train, val;
};

// Small synthetic task: signal words decide the label, no label noise.
Data synthetic_data(std::size_t n, std::uint64_t seed) {
  cli::SyntheticSpec spec;
  spec.examples = n;
  spec.vocab_size = 120;
  spec.flip_rate = 0.0;
  spec.decorate = false;
  spec.seed = seed;
  const auto ds = cli::generate_synthetic(spec);
  text::Preprocessor pre;
  const auto corpus = text::prepare_corpus(ds, pre);
  const double ratios[] = {0.8, 0.2};
  const auto parts = text::stratified_split(corpus.labels, ratios, derive_seed(seed, "split"));
  const auto vocab = text::build_vocabulary(corpus, parts[0], 1);
  Data d;
  d.enc.vocab_size = vocab.size();
  d.enc.num_classes = 2;
  d.enc.max_len = 16;
  d.enc.layers = 1;
  d.enc.model_dim = 16;
  d.enc.heads = 2;
  d.enc.ff_dim = 32;
  d.train = text::tokenize_subset(corpus, parts[0], vocab, 16);
  d.val = text::tokenize_subset(corpus, parts[1], vocab, 16);
  return d;
}

TrainConfig small_config(std::uint64_t seed) {
  TrainConfig c;
  c.seed = seed;
  c.proj_hidden = 32;
  c.proj_dim = 16;
  c.epochs = 5;
  c.patience = 5;
  return c;
}

double ce_of(const Tensor<double>& logits, const std::vector<int>& labels) {
  Tape<double> tape;
  return ops::cross_entropy(tape.constant(logits), labels).item();
}

using Span = std::span<const TokenizedExample>;

}  // namespace

TEST(CrossEntropy, PerfectAndUniform) {
  EXPECT_NEAR(ce_of(Tensor<double>({1, 2}, {60.0, -60.0}), {0}), 0.0, 1e-12);
  EXPECT_NEAR(ce_of(Tensor<double>({3, 2}, 0.7), {0, 1, 1}), std::log(2.0), 1e-12);
}

TEST(CrossEntropy, MatchesDirectFormula) {
  Rng rng(21);
  std::uniform_real_distribution<double> u(-3, 3);
  Tensor<float> logits({8, 3});
  for (auto& v : logits.values) v = static_cast<float>(u(rng));
  const std::vector<int> labels{0, 1, 2, 2, 1, 0, 0, 1};
  double oracle = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    double z = 0;
    for (std::size_t c = 0; c < 3; ++c) z += std::exp(static_cast<double>(logits.values[i * 3 + c]));
    oracle -= std::log(std::exp(static_cast<double>(logits.values[i * 3 + labels[i]])) / z);
  }
  oracle /= 8;
  Tape<float> tape;
  const double got = ops::cross_entropy(tape.constant(logits), labels).item();
  EXPECT_NEAR(got, oracle, 1e-5 * oracle);
}

TEST(CrossEntropy, LargeLogitsStayFinite) {
  EXPECT_NEAR(ce_of(Tensor<double>({1, 2}, {1000.0, 0.0}), {1}), 1000.0, 1e-9);
}

TEST(CrossEntropy, LabelOutOfRange) {
  Tape<double> tape;
  const std::vector<int> bad{0, 3}, neg{-1, 0};
  EXPECT_THROW(ops::cross_entropy(tape.constant(Tensor<double>({2, 3}, 0.0)), bad), InputError);
  EXPECT_THROW(ops::cross_entropy(tape.constant(Tensor<double>({2, 3}, 0.0)), neg), InputError);
}

TEST(TotalLoss, Boundaries) {
  EXPECT_EQ(total_loss(0.7, 0.3, 9.0, 0.0), (0.7 + 0.3) / 2);
  EXPECT_EQ(total_loss(0.7, 0.3, 9.0, 1.0), 9.0);
  EXPECT_NEAR(total_loss(1.0, 0.6, 2.0, 0.2), 1.04, 1e-12);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  auto bad = [&](auto mutate) {
    TrainConfig x;
    mutate(x);
    EXPECT_THROW(x.validate(), ConfigError);
  };
  bad([](TrainConfig& x) { x.lambda = 1.5; });
  bad([](TrainConfig& x) { x.epochs = 0; });
  bad([](TrainConfig& x) { x.patience = 0; });
  bad([](TrainConfig& x) { x.batch_size = 1; });
  bad([](TrainConfig& x) { x.epsilon = -1e-3; });
}

TEST(TrainStep, ZeroNoiseZeroLambdaIsPlainFineTuning) {
  const auto enc = micro_encoder_config(1, 8);
  const auto batch = micro_batch(4, enc, 3);
  TrainConfig joint = small_config(5);
  joint.epsilon = 0.0;
  joint.lambda = 0.0;
  TrainConfig plain = joint;
  plain.rwp = false;
  plain.cl = false;
  auto a = init_train_state<float>(enc, joint);
  auto b = init_train_state<float>(enc, plain);
  const auto ra = compute_gradients(a, Span(batch), enc, joint);
  const auto rb = compute_gradients(b, Span(batch), enc, plain);
  EXPECT_EQ(ra.ce1, ra.ce2);
  EXPECT_EQ(ra.total, ra.ce1);
  EXPECT_EQ(ra.ce1, rb.ce1);
  EXPECT_EQ(rb.bt, 0.0);
  for (const auto& [name, w] : a.model) {
    const auto& g = b.model.at(name).grad;
    ASSERT_EQ(w.grad.size(), g.size()) << name;
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(w.grad[i], g[i], 1e-6 + 1e-5 * std::abs(g[i])) << name;
  }
  train_step(a, Span(batch), enc, joint);
  train_step(b, Span(batch), enc, plain);
  for (const auto& [name, w] : a.model)
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(w.values[i], b.model.at(name).values[i], 1e-6) << name;
}

TEST(TrainStep, ZeroNoiseStreamsMatchAndBtIsOffDiagonalOnly) {
  const auto enc = micro_encoder_config(1, 8);
  const auto batch = micro_batch(6, enc, 4);
  TrainConfig cfg = small_config(6);
  cfg.epsilon = 0.0;
  auto st = init_train_state<double>(enc, cfg);
  auto proj = st.projection;
  const auto rep = compute_gradients(st, Span(batch), enc, cfg);
  EXPECT_EQ(rep.ce1, rep.ce2);
  Tape<double> tape;
  auto out = encoder_forward(tape, st.model, enc, Span(batch));
  auto e = project(tape, proj, out.cls, true, false);
  const auto a = cross_correlation(e, e).value();
  const std::size_t n = a.dims[0];
  double off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_NEAR(a.values[i * n + i], 1.0, 1e-12);
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) off += a.values[i * n + j] * a.values[i * n + j];
  }
  EXPECT_NEAR(rep.bt, cfg.beta * off, 1e-9 * std::max(1.0, rep.bt));
}

TEST(TrainStep, LambdaOneLeavesClassifierWithoutGradient) {
  const auto enc = micro_encoder_config(1, 8);
  const auto batch = micro_batch(4, enc, 7);
  TrainConfig cfg = small_config(8);
  cfg.epsilon = 1e-2;
  cfg.lambda = 1.0;
  auto st = init_train_state<double>(enc, cfg);
  const auto rep = compute_gradients(st, Span(batch), enc, cfg);
  EXPECT_EQ(rep.total, rep.bt);
  for (const char* name : {"classifier.weight", "classifier.bias"})
    for (double g : st.model.at(name).grad) EXPECT_EQ(g, 0.0) << name;
  double other = 0;
  for (double g : st.model.at("embed.token").grad) other += std::abs(g);
  EXPECT_GT(other, 0.0);
}

TEST(TrainStep, AblationWiring) {
  const auto enc = micro_encoder_config(1, 8);
  const auto batch = micro_batch(4, enc, 9);
  TrainConfig rwp_only = small_config(10);
  rwp_only.epsilon = 1e-2;
  rwp_only.lambda = 0.3;
  rwp_only.cl = false;
  EXPECT_EQ(rwp_only.effective_lambda(), 0.0);
  auto st = init_train_state<float>(enc, rwp_only);
  const auto rep = compute_gradients(st, Span(batch), enc, rwp_only);
  EXPECT_NE(rep.ce1, rep.ce2);
  EXPECT_EQ(rep.bt, 0.0);
  EXPECT_EQ(rep.lambda, 0.0);
  EXPECT_TRUE(rep.identity_holds());
  for (const auto& [name, w] : st.projection.params) EXPECT_FALSE(w.has_grad()) << name;

  TrainConfig base = rwp_only;
  base.rwp = false;
  auto sb = init_train_state<float>(enc, base);
  const auto rb = compute_gradients(sb, Span(batch), enc, base);
  EXPECT_EQ(rb.ce1, rb.ce2);
  EXPECT_EQ(rb.total, rb.ce1);
}

TEST(TrainStep, BatchOfOneRejected) {
  const auto enc = micro_encoder_config(1, 8);
  const auto batch = micro_batch(1, enc, 1);
  auto cfg = small_config(1);
  auto st = init_train_state<float>(enc, cfg);
  EXPECT_THROW(train_step(st, Span(batch), enc, cfg), ContractError);
}

TEST(TrainStep, NonFiniteLossLeavesParametersUntouched) {
  const auto enc = micro_encoder_config(1, 8);
  const auto batch = micro_batch(4, enc, 2);
  auto cfg = small_config(2);
  auto st = init_train_state<float>(enc, cfg);
  st.model.at("classifier.bias").values[0] = std::numeric_limits<float>::quiet_NaN();
  const auto before = st.model.at("embed.token").values;
  const auto rep = train_step(st, Span(batch), enc, cfg);
  EXPECT_FALSE(rep.finite);
  EXPECT_EQ(st.model.at("embed.token").values, before);
}

TEST(TrainStep, JointGradientMatchesFiniteDifferences) {
  EXPECT_LT(check_train_step(2, 31).report.max_rel_error, 1e-3);
  EXPECT_LT(check_train_step(4, 32).report.max_rel_error, 1e-3);
}

TEST(TrainStep, FloatGradientsAgreeWithDouble) {
  const auto enc = micro_encoder_config(2, 8);
  const auto batch = micro_batch(4, enc, 12);
  TrainConfig cfg = small_config(13);
  cfg.epsilon = 1e-2;
  cfg.lambda = 0.3;
  auto sf = init_train_state<float>(enc, cfg);
  auto sd = init_train_state<double>(enc, cfg);
  const auto rf = compute_gradients(sf, Span(batch), enc, cfg);
  const auto rd = compute_gradients(sd, Span(batch), enc, cfg);
  EXPECT_NEAR(rf.total, rd.total, 1e-5 * std::abs(rd.total));
  double diff = 0, norm = 0;
  for (const auto& [name, w] : sd.model)
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double d = w.grad[i] - sf.model.at(name).grad[i];
      diff += d * d;
      norm += w.grad[i] * w.grad[i];
    }
  EXPECT_LT(std::sqrt(diff / norm), 1e-3);
}

TEST(AdamW, ZeroGradientWithoutDecayIsNoOp) {
  ParamMap<float> p;
  p.emplace("a", Tensor<float>({3}, {1, -2, 3}));
  p.emplace("b", Tensor<float>({2}, {4, 5}));
  p.at("a").grad.assign(3, 0.0f);
  const auto a0 = p.at("a").values, b0 = p.at("b").values;
  AdamW<float> opt(1e-3, 0.9, 0.999, 1e-8, 0.0);
  for (int i = 0; i < 3; ++i) opt.step(p);
  EXPECT_EQ(p.at("a").values, a0);
  EXPECT_EQ(p.at("b").values, b0);
}

TEST(AdamW, FirstStepMatchesClosedForm) {
  // After one step the bias-corrected update is g/(|g|+eps): a signed lr step.
  ParamMap<double> p;
  p.emplace("w", Tensor<double>({2}, {1.0, -1.0}));
  p.at("w").grad = {0.5, -2.0};
  AdamW<double> opt(0.1, 0.9, 0.999, 1e-8, 0.01);
  opt.step(p);
  EXPECT_NEAR(p.at("w").values[0], 1.0 - 0.1 * 0.01 * 1.0 - 0.1 * (0.5 / (0.5 + 1e-8)), 1e-12);
  EXPECT_NEAR(p.at("w").values[1], -1.0 + 0.1 * 0.01 * 1.0 + 0.1 * (2.0 / (2.0 + 1e-8)), 1e-12);
}

TEST(EarlyStopping, StrictlyDecreasingWithPatienceOne) {
  EarlyStopping s(1);
  EXPECT_TRUE(s.update(1, 0.9));
  EXPECT_FALSE(s.should_stop());
  EXPECT_FALSE(s.update(2, 0.8));
  EXPECT_TRUE(s.should_stop());
  EXPECT_EQ(s.best_epoch(), 1u);
}

TEST(EarlyStopping, ResetsOnlyOnStrictImprovement) {
  EarlyStopping s(3);
  s.update(1, 0.5);
  s.update(2, 0.5);
  EXPECT_EQ(s.since_best(), 1u);
  EXPECT_TRUE(s.update(3, 0.6));
  EXPECT_EQ(s.since_best(), 0u);
  s.update(4, 0.1);
  s.update(5, 0.6);
  EXPECT_FALSE(s.should_stop());
  s.update(6, 0.59);
  EXPECT_TRUE(s.should_stop());
  EXPECT_EQ(s.best_epoch(), 3u);
  EXPECT_DOUBLE_EQ(s.best(), 0.6);
}

TEST(EpochBatches, DropsTrailingSingleton) {
  auto b = epoch_batches(33, 16, 1, 1);
  ASSERT_EQ(b.size(), 2u);
  b = epoch_batches(34, 16, 1, 1);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[2].size(), 2u);
  std::vector<std::size_t> all;
  for (const auto& x : b) all.insert(all.end(), x.begin(), x.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 34; ++i) EXPECT_EQ(all[i], i);
  EXPECT_EQ(epoch_batches(34, 16, 1, 2).size(), 3u);
  EXPECT_NE(epoch_batches(34, 16, 1, 1)[0], epoch_batches(34, 16, 1, 2)[0]);
  EXPECT_EQ(epoch_batches(34, 16, 1, 1)[0], epoch_batches(34, 16, 1, 1)[0]);
}

TEST(Fit, ReturnsBestEpochCheckpoint) {
  const auto d = synthetic_data(200, 41);
  auto cfg = small_config(42);
  cfg.epochs = 6;
  cfg.patience = 2;
  const auto res = fit(Span(d.train), Span(d.val), d.enc, cfg);
  ASSERT_FALSE(res.log.empty());
  EXPECT_LE(res.log.size(), 6u);
  double best = -1;
  for (const auto& r : res.log) best = std::max(best, r.val_macro_f1);
  EXPECT_EQ(res.best_val_f1, best);
  EXPECT_EQ(res.log[res.best_epoch - 1].val_macro_f1, best);
  EXPECT_DOUBLE_EQ(evaluate(res.best_model, d.enc, Span(d.val)).macro_f1, best);
  EXPECT_EQ(res.identity_violations, 0u);
  if (res.stopped_early) {
    EXPECT_EQ(res.log.size() - res.best_epoch, cfg.patience);
  }
}

TEST(Fit, Deterministic) {
  const auto d = synthetic_data(120, 43);
  auto cfg = small_config(44);
  cfg.epochs = 2;
  const auto a = fit(Span(d.train), Span(d.val), d.enc, cfg);
  const auto b = fit(Span(d.train), Span(d.val), d.enc, cfg);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(to_json(a.log[i]), to_json(b.log[i]));
  EXPECT_EQ(checksum(a.best_model), checksum(b.best_model));
}

TEST(Fit, EmptySetsRejected) {
  const auto d = synthetic_data(60, 45);
  const auto cfg = small_config(1);
  EXPECT_THROW(fit(Span(d.train), Span(), d.enc, cfg), ConfigError);
  EXPECT_THROW(fit(Span(), Span(d.val), d.enc, cfg), ConfigError);
}

TEST(Fit, LossDecreasesOverFirstFiveEpochs) {
  const auto d = synthetic_data(300, 50);
  int decreasing = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto cfg = small_config(100 + s);
    cfg.patience = 5;
    const auto res = fit(Span(d.train), Span(d.val), d.enc, cfg);
    ASSERT_EQ(res.log.size(), 5u);
    decreasing += res.log[4].total < res.log[0].total;
  }
  EXPECT_GE(decreasing, 9);
}

TEST(Grid, SinglePoint) {
  const auto d = synthetic_data(80, 60);
  auto base = small_config(0);
  base.epochs = 1;
  GridSpec spec{{8}, {1e-3}, {0.2}};
  const auto r = grid_search(Span(d.train), Span(d.val), d.enc, base, spec, 61);
  ASSERT_EQ(r.cells.size(), 1u);
  EXPECT_EQ(r.best_config.batch_size, 8u);
  EXPECT_EQ(r.best_config.epsilon, 1e-3);
  EXPECT_EQ(r.best_config.lambda, 0.2);
  const auto table = render_grid_table(r);
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 2);
}

TEST(Grid, CellCountDeterminismAndJobs) {
  const auto d = synthetic_data(60, 62);
  auto base = small_config(0);
  base.epochs = 1;
  GridSpec spec;
  EXPECT_EQ(spec.cells(), 40u);
  spec.batch_sizes = {8, 16};
  spec.epsilons = {1e-4, 1e-3, 5e-3};
  spec.lambdas = {0.1, 0.4};
  const auto a = grid_search(Span(d.train), Span(d.val), d.enc, base, spec, 63);
  EXPECT_EQ(a.cells.size(), 12u);
  for (const auto& c : a.cells) EXPECT_TRUE(c.error.empty()) << c.error;
  const auto b = grid_search(Span(d.train), Span(d.val), d.enc, base, spec, 63, 3);
  EXPECT_EQ(render_grid_table(a), render_grid_table(b));
  EXPECT_EQ(to_json(a), to_json(b));
}

TEST(Grid, TieBreakPrefersSmallerSettings) {
  GridCell a, b;
  a.val_f1 = b.val_f1 = 0.8;
  a.epsilon = 1e-4;
  b.epsilon = 1e-3;
  EXPECT_TRUE(grid_better(a, b));
  b.epsilon = 1e-4;
  a.lambda = 0.1;
  b.lambda = 0.2;
  EXPECT_TRUE(grid_better(a, b));
  b.lambda = 0.1;
  a.batch_size = 16;
  b.batch_size = 32;
  EXPECT_TRUE(grid_better(a, b));
  b.val_f1 = 0.81;
  EXPECT_FALSE(grid_better(a, b));
  b.error = "boom";
  EXPECT_TRUE(grid_better(a, b));
}

TEST(Grid, EmptyAxisRejected) {
  const auto d = synthetic_data(60, 64);
  GridSpec spec{{}, {1e-3}, {0.2}};
  EXPECT_THROW(grid_search(Span(d.train), Span(d.val), d.enc, small_config(0), spec, 1), ConfigError);
}
