#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rwpcl/core/gradcheck.hpp"
#include "rwpcl/core/ops.hpp"
#include "rwpcl/train/gradcheck_suite.hpp"

using namespace rwpcl;

namespace {

Tensor<float> T2(std::size_t r, std::size_t c, std::vector<float> v) { return Tensor<float>({r, c}, std::move(v)); }

Tensor<double> random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Tensor<double> t({r, c});
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& v : t.values) v = u(rng);
  return t;
}

}  // namespace

TEST(Tensor, SizeMustMatchDims) {
  EXPECT_THROW(Tensor<float>({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor<float>(Shape{0, 3}), ShapeError);
  Tensor<float> t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_FALSE(t.has_grad());
}

TEST(Matmul, IdentityAndDot) {
  Tape<float> tape;
  auto y = ops::matmul(tape.constant(T2(2, 2, {1, 0, 0, 1})), tape.constant(T2(2, 2, {2, 3, 4, 5})));
  EXPECT_EQ(y.value().values, (std::vector<float>{2, 3, 4, 5}));
  auto d = ops::matmul(tape.constant(T2(1, 2, {1, 2})), tape.constant(T2(2, 1, {3, 4})));
  EXPECT_EQ(d.dims(), (Shape{1, 1}));
  EXPECT_EQ(d.item(), 11.0f);
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(5);
  auto a = random_matrix(rng, 4, 3), b = random_matrix(rng, 3, 2);
  Tape<double> tape;
  auto y = ops::matmul(tape.constant(a), tape.constant(b)).value();
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 3; ++k) s += a.at(i, k) * b.at(k, j);
      EXPECT_NEAR(y.at(i, j), s, 1e-12);
    }
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  Tape<float> tape;
  try {
    ops::matmul(tape.constant(Tensor<float>({2, 3})), tape.constant(Tensor<float>({2, 3})));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[2,3] by [2,3]"), std::string::npos);
  }
}

TEST(Elementwise, ReluSoftmaxLayernorm) {
  Tape<float> tape;
  EXPECT_EQ(ops::relu(tape.constant(Tensor<float>({3}, {-1, 0, 2}))).value().values, (std::vector<float>{0, 0, 2}));
  auto s = ops::softmax_rows(tape.constant(Tensor<float>({2}, {0, 0}))).value();
  EXPECT_FLOAT_EQ(s.values[0], 0.5f);
  EXPECT_FLOAT_EQ(s.values[1], 0.5f);
  auto ln = ops::layernorm_rows(tape.constant(T2(1, 4, {3, 3, 3, 3}))).value();
  for (float v : ln.values) EXPECT_EQ(v, 0.0f);
}

TEST(Elementwise, SoftmaxRowsOnSimplex) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_matrix(rng, 5, 7);
    for (auto& v : x.values) v *= 20;
    Tape<double> tape;
    auto y = ops::softmax_rows(tape.constant(x)).value();
    for (std::size_t i = 0; i < 5; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 7; ++j) {
        EXPECT_GE(y.at(i, j), 0.0);
        s += y.at(i, j);
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(Elementwise, BroadcastIsTrailingOnly) {
  Tape<float> tape;
  auto a = tape.constant(Tensor<float>({2, 3}, {1, 2, 3, 4, 5, 6}));
  auto row = tape.constant(Tensor<float>({3}, {10, 20, 30}));
  EXPECT_EQ(ops::add(a, row).value().values, (std::vector<float>{11, 22, 33, 14, 25, 36}));
  EXPECT_THROW(ops::add(a, tape.constant(Tensor<float>({2}))), ShapeError);
  EXPECT_THROW(ops::mul(a, tape.constant(Tensor<float>({3, 2}))), ShapeError);
}

TEST(Backward, QuadraticAndConstant) {
  Tape<float> tape;
  auto w = tape.variable(Tensor<float>({3}, {1, 2, 3}));
  tape.backward(ops::sum(ops::mul(w, w)));
  EXPECT_EQ(tape.grad(w).values, (std::vector<float>{2, 4, 6}));

  Tape<float> t2;
  auto v = t2.variable(Tensor<float>({2}, {1, 2}));
  auto c = t2.constant(Tensor<float>::scalar(4));
  (void)v;
  t2.backward(c);
  EXPECT_EQ(t2.grad(v).values, (std::vector<float>{0, 0}));
}

TEST(Backward, ContractErrors) {
  Tape<float> tape;
  auto w = tape.variable(Tensor<float>({2}, {1, 2}));
  EXPECT_THROW(tape.backward(ops::mul(w, w)), ContractError);
  auto l = ops::sum(w);
  tape.backward(l);
  EXPECT_THROW(tape.backward(l), ContractError);
  EXPECT_THROW(ops::sum(w), ContractError);
}

TEST(Backward, VisitsEachOpOnceInReverse) {
  Tape<double> tape;
  auto a = tape.variable(Tensor<double>({2}, {1, 2}));
  auto b = ops::scale(a, 2.0);
  auto c = ops::mul(b, a);
  auto d = ops::sum(c);
  tape.backward(d);
  EXPECT_EQ(tape.backward_order(), (std::vector<std::size_t>{d.id, c.id, b.id}));
}

TEST(Backward, IndependentSubgraphsConcatenate) {
  Rng rng(3);
  auto x = random_matrix(rng, 2, 3), y = random_matrix(rng, 3, 2);
  auto run = [&](bool first, bool second) {
    Tape<double> tape;
    auto vx = tape.variable(x), vy = tape.variable(y);
    auto lx = ops::sum(ops::mul(ops::relu(vx), vx));
    auto ly = ops::sum(ops::softmax_rows(ops::scale(vy, 3.0)));
    auto ly2 = ops::sum(ops::mul(ops::layernorm_rows(vy), ops::layernorm_rows(vy)));
    Var<double> loss = first && second ? ops::add(lx, ops::add(ly, ly2)) : first ? lx : ops::add(ly, ly2);
    tape.backward(loss);
    return std::pair{tape.grad(vx).values, tape.grad(vy).values};
  };
  auto both = run(true, true), gx = run(true, false), gy = run(false, true);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(both.first[i], gx.first[i], 1e-12);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(both.second[i], gy.second[i], 1e-12);
}

TEST(Backward, SeededPassesAreBitIdentical) {
  auto run = [] {
    Rng rng(42);
    Tensor<float> a({4, 5}), b({5, 3});
    std::normal_distribution<float> n;
    for (auto& v : a.values) v = n(rng);
    for (auto& v : b.values) v = n(rng);
    Tape<float> tape;
    auto va = tape.variable(a), vb = tape.variable(b);
    auto loss = ops::sum(ops::softmax_rows(ops::layernorm_rows(ops::matmul(va, vb))));
    tape.backward(ops::add(loss, ops::sum(ops::mul(va, va))));
    return std::pair{tape.grad(va).values, tape.grad(vb).values};
  };
  EXPECT_EQ(run(), run());
}

TEST(Backward, RandomMlpMatchesFiniteDifferenceIn32Bit) {
  // 3-layer MLP evaluated in float; the finite-difference reference is the
  // same function replayed in double.
  Rng rng(8);
  std::vector<Tensor<double>> in{random_matrix(rng, 4, 5), random_matrix(rng, 5, 6), random_matrix(rng, 6, 4),
                                 random_matrix(rng, 4, 3)};
  const std::vector<int> labels{0, 2, 1, 1};
  auto mlp = [&](auto& tape, const auto& l) {
    auto h = ops::relu(ops::matmul(l[0], l[1]));
    h = ops::relu(ops::matmul(h, l[2]));
    return ops::cross_entropy(ops::matmul(h, l[3]), labels);
  };
  Tape<float> tf;
  std::vector<Var<float>> lf;
  for (auto& t : in) lf.push_back(tf.variable(t.cast<float>()));
  tf.backward(mlp(tf, lf));
  std::vector<std::vector<double>> analytic;
  std::vector<std::pair<std::string, Tensor<double>*>> targets;
  for (std::size_t i = 0; i < in.size(); ++i) {
    auto g = tf.grad(lf[i]).values;
    analytic.emplace_back(g.begin(), g.end());
    targets.emplace_back("w" + std::to_string(i), &in[i]);
  }
  auto loss = [&] {
    Tape<double> td(false);
    std::vector<Var<double>> ld;
    for (auto& t : in) ld.push_back(td.constant(t));
    return mlp(td, ld).item();
  };
  GradCheckOptions opt;
  opt.step = 1e-3;
  auto rep = finite_difference_check(targets, analytic, loss, opt);
  EXPECT_LT(rep.max_rel_error, 1e-3) << rep.worst;
}

TEST(BatchNorm, TwoPointStandardization) {
  Tape<float> tape;
  auto y = ops::batchnorm1d(tape.constant(T2(2, 1, {1, 3})), tape.constant(Tensor<float>({1}, 1.0f)),
                            tape.constant(Tensor<float>({1}, 0.0f)), 1e-5f, true)
               .value();
  EXPECT_NEAR(y.values[0], -1.0f, 1e-5);
  EXPECT_NEAR(y.values[1], 1.0f, 1e-5);
}

TEST(BatchNorm, ZeroGammaGivesShift) {
  Rng rng(1);
  Tape<double> tape;
  auto y = ops::batchnorm1d(tape.constant(random_matrix(rng, 4, 3)), tape.constant(Tensor<double>({3}, 0.0)),
                            tape.constant(Tensor<double>({3}, {0.5, -1, 2})), 1e-5, true)
               .value();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(y.at(i, 0), 0.5);
}

TEST(BatchNorm, ColumnStatisticsAfterNormalization) {
  Rng rng(2);
  Tensor<float> x({16, 8});
  std::normal_distribution<float> n(3.0f, 2.0f);
  for (auto& v : x.values) v = n(rng);
  std::vector<float> rm(8, 0), rv(8, 1);
  Tape<float> tape;
  auto y = ops::batchnorm1d(tape.constant(x), tape.constant(Tensor<float>({8}, 1.0f)),
                            tape.constant(Tensor<float>({8}, 0.0f)), 1e-5f, true, {&rm, &rv, 0.1f})
               .value();
  for (std::size_t j = 0; j < 8; ++j) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < 16; ++i) m += y.at(i, j);
    m /= 16;
    for (std::size_t i = 0; i < 16; ++i) v += (y.at(i, j) - m) * (y.at(i, j) - m);
    v /= 16;
    EXPECT_LT(std::abs(m), 1e-5);
    EXPECT_NEAR(v, 1.0, 1e-4);  // eps_bn = 1e-5 and float accumulation
  }
  EXPECT_NE(rm[0], 0.0f);  // running statistics moved
}

TEST(BatchNorm, SingleRowTrainingIsContractError) {
  Tape<float> tape;
  EXPECT_THROW(ops::batchnorm1d(tape.constant(T2(1, 2, {1, 2})), tape.constant(Tensor<float>({2}, 1.0f)),
                                tape.constant(Tensor<float>({2}, 0.0f)), 1e-5f, true),
               ContractError);
}

TEST(Attention, PadKeysGetZeroWeight) {
  Rng rng(4);
  auto q = random_matrix(rng, 8, 4), k = random_matrix(rng, 8, 4);
  std::vector<std::uint8_t> mask{1, 1, 1, 0, 1, 1, 0, 0};
  auto p = ops::attention_probs(q, k, mask, 2, 4, 2);
  for (std::size_t e = 0; e < 2; ++e)
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t i = 0; i < 4; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < 4; ++j) {
          const double w = p[((e * 2 + h) * 4 + i) * 4 + j];
          if (!mask[e * 4 + j]) EXPECT_LT(w, 1e-6);
          s += w;
        }
        EXPECT_NEAR(s, 1.0, 1e-6);
      }
}

// Every differentiable op, 20 random inputs each, analytic vs 64-bit central
// differences.
TEST(GradCheck, EveryOpBelowOneInTenThousand) {
  for (const auto& e : check_ops(20, 123)) {
    EXPECT_LT(e.report.max_rel_error, 1e-4) << e.name << ": " << e.report.worst;
    EXPECT_GT(e.report.coordinates, 0u) << e.name;
  }
}
