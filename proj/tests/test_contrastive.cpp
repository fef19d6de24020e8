#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rwpcl/core/gradcheck.hpp"
#include "rwpcl/model/barlow_twins.hpp"
#include "rwpcl/model/projection.hpp"
#include "rwpcl/train/gradcheck_suite.hpp"

using namespace rwpcl;

namespace {

Tensor<double> random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Tensor<double> t({r, c});
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& v : t.values) v = u(rng);
  return t;
}

Tensor<double> eye(std::size_t n, double s = 1.0) {
  Tensor<double> t({n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i) t.values[i * n + i] = s;
  return t;
}

double bt_of(const Tensor<double>& a, double beta) {
  Tape<double> tape;
  return bt_loss(tape.constant(a), beta).item();
}

Tensor<double> xcorr(const Tensor<double>& a, const Tensor<double>& b, bool centered = false) {
  Tape<double> tape;
  return cross_correlation(tape.constant(a), tape.constant(b), centered).value();
}

}  // namespace

TEST(Projection, OutputShapeDefaultDims) {
  ProjectionConfig pc;
  EXPECT_EQ(pc.hidden_dim, 1024u);
  EXPECT_EQ(pc.output_dim, 300u);
  pc.input_dim = 16;
  auto proj = ProjectionParams<float>::init(pc, 1);
  Tape<float> tape;
  Rng rng(2);
  Tensor<float> x = random_matrix(rng, 4, 16).cast<float>();
  auto y = project(tape, proj, tape.constant(x), true);
  EXPECT_EQ(y.dims(), (Shape{4, 300}));
}

TEST(Projection, ZeroOutputLayerGivesZero) {
  ProjectionConfig pc;
  pc.input_dim = 6;
  pc.hidden_dim = 10;
  pc.output_dim = 3;
  auto proj = ProjectionParams<double>::init(pc, 4);
  for (auto& v : proj.params.at("proj.linear2.weight").values) v = 0.0;
  Tape<double> tape;
  Rng rng(5);
  auto y = project(tape, proj, tape.constant(random_matrix(rng, 3, 6)), true);
  for (double v : y.value().values) EXPECT_EQ(v, 0.0);
}

TEST(Projection, TrainingNeedsTwoRows) {
  ProjectionConfig pc;
  pc.input_dim = 4;
  pc.hidden_dim = 8;
  pc.output_dim = 2;
  auto proj = ProjectionParams<double>::init(pc, 1);
  Tape<double> tape;
  Rng rng(1);
  EXPECT_THROW(project(tape, proj, tape.constant(random_matrix(rng, 1, 4)), true), ContractError);
  EXPECT_THROW(project(tape, proj, tape.constant(random_matrix(rng, 3, 5)), true), ShapeError);
  Tape<double> t2;
  EXPECT_EQ(project(t2, proj, t2.constant(random_matrix(rng, 1, 4)), false).dims(), (Shape{1, 2}));
}

TEST(Projection, GradientsMatchFiniteDifferences) {
  const auto r = check_projection(11);
  EXPECT_LT(r.report.max_rel_error, 1e-4);
}

TEST(CrossCorrelation, IdentityAndNegatedIdentity) {
  const auto i4 = eye(4);
  const auto a = xcorr(i4, i4);
  for (std::size_t k = 0; k < 16; ++k) EXPECT_NEAR(a.values[k], i4.values[k], 1e-12);
  const auto b = xcorr(i4, eye(4, -1.0));
  for (std::size_t k = 0; k < 16; ++k) EXPECT_NEAR(b.values[k], -i4.values[k], 1e-12);
}

TEST(CrossCorrelation, MatchesDoubleLoopOracle) {
  Rng rng(8);
  const auto ec = random_matrix(rng, 8, 4), ep = random_matrix(rng, 8, 4);
  const auto a = xcorr(ec, ep);
  ASSERT_EQ(a.dims, (Shape{4, 4}));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double num = 0, ni = 0, nj = 0;
      for (std::size_t b = 0; b < 8; ++b) {
        num += ec.values[b * 4 + i] * ep.values[b * 4 + j];
        ni += ec.values[b * 4 + i] * ec.values[b * 4 + i];
        nj += ep.values[b * 4 + j] * ep.values[b * 4 + j];
      }
      EXPECT_NEAR(a.values[i * 4 + j], num / std::sqrt(ni * nj), 1e-12) << i << "," << j;
    }
}

TEST(CrossCorrelation, ShapeAndBatchErrors) {
  Rng rng(1);
  Tape<double> tape;
  EXPECT_THROW(cross_correlation(tape.constant(random_matrix(rng, 4, 3)), tape.constant(random_matrix(rng, 4, 2))),
               ShapeError);
  EXPECT_THROW(cross_correlation(tape.constant(random_matrix(rng, 1, 3)), tape.constant(random_matrix(rng, 1, 3))),
               ContractError);
}

TEST(CrossCorrelation, UnitDiagonalForIdenticalInputs) {
  Rng rng(3);
  for (int rep = 0; rep < 5; ++rep) {
    const auto e = random_matrix(rng, 6, 5);
    const auto a = xcorr(e, e);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(a.values[i * 5 + i], 1.0, 1e-12);
    for (double v : a.values) EXPECT_LE(std::abs(v), 1.0 + 1e-12);
  }
}

TEST(CrossCorrelation, InvariantToPositiveColumnScaling) {
  Rng rng(4);
  const auto ec = random_matrix(rng, 7, 3), ep = random_matrix(rng, 7, 3);
  auto scaled = ec;
  const double s[] = {0.01, 3.0, 250.0};
  for (std::size_t b = 0; b < 7; ++b)
    for (std::size_t j = 0; j < 3; ++j) scaled.values[b * 3 + j] *= s[j];
  const auto a = xcorr(ec, ep), b = xcorr(scaled, ep);
  for (std::size_t k = 0; k < 9; ++k) EXPECT_NEAR(a.values[k], b.values[k], 1e-12);
}

TEST(CrossCorrelation, ZeroColumnGivesZeroEntries) {
  Rng rng(6);
  auto ec = random_matrix(rng, 5, 3);
  const auto ep = random_matrix(rng, 5, 3);
  for (std::size_t b = 0; b < 5; ++b) ec.values[b * 3 + 1] = 0.0;
  const auto a = xcorr(ec, ep);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(a.values[1 * 3 + j], 0.0);
    EXPECT_TRUE(std::isfinite(a.values[j]));
  }
}

TEST(CrossCorrelation, CenteringRemovesColumnMeans) {
  Rng rng(9);
  const auto ec = random_matrix(rng, 6, 3), ep = random_matrix(rng, 6, 3);
  auto shifted = ec;
  for (auto& v : shifted.values) v += 5.0;
  const auto a = xcorr(ec, ep, true), b = xcorr(shifted, ep, true);
  for (std::size_t k = 0; k < 9; ++k) EXPECT_NEAR(a.values[k], b.values[k], 1e-10);
}

TEST(BarlowTwins, WorkedValues) {
  EXPECT_DOUBLE_EQ(bt_of(eye(4), 0.005), 0.0);
  EXPECT_NEAR(bt_of(eye(2, -1.0), 0.005), 8.0, 1e-12);
  EXPECT_NEAR(bt_of(Tensor<double>({2, 2}, {1, 0.5, 0.5, 1}), 0.005), 0.0025, 1e-12);
}

TEST(BarlowTwins, MatchesDirectSumAndIsNonNegative) {
  Rng rng(10);
  for (int rep = 0; rep < 20; ++rep) {
    const auto a = random_matrix(rng, 5, 5);
    double on = 0, off = 0;
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        const double v = a.values[i * 5 + j];
        if (i == j)
          on += (1 - v) * (1 - v);
        else
          off += v * v;
      }
    const double got = bt_of(a, 0.3);
    EXPECT_NEAR(got, on + 0.3 * off, 1e-12);
    EXPECT_GE(got, 0.0);
  }
}

TEST(BarlowTwins, RejectsBadInput) {
  Tape<double> tape;
  EXPECT_THROW(bt_loss(tape.constant(Tensor<double>({2, 3}, 0.0)), 0.005), ShapeError);
  EXPECT_THROW(bt_loss(tape.constant(eye(2)), -1.0), ContractError);
}

TEST(BarlowTwins, GradientThroughCorrelationMatchesFiniteDifferences) {
  Rng rng(12);
  auto ec = random_matrix(rng, 6, 4), ep = random_matrix(rng, 6, 4);
  std::vector<std::pair<std::string, Tensor<double>*>> targets{{"ec", &ec}, {"ep", &ep}};
  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    auto loss = bt_loss(cross_correlation(tape.param(ec), tape.param(ep)), 0.005);
    tape.backward(loss);
    analytic = {tape.grad_of(ec), tape.grad_of(ep)};
  }
  auto loss = [&] {
    Tape<double> tape(false);
    return bt_loss(cross_correlation(tape.constant(ec), tape.constant(ep)), 0.005).item();
  };
  EXPECT_LT(finite_difference_check(targets, analytic, loss).max_rel_error, 1e-4);
}
