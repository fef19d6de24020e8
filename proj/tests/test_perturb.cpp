#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rwpcl/model/encoder.hpp"
#include "rwpcl/model/perturb.hpp"
#include "rwpcl/train/step.hpp"

using namespace rwpcl;

namespace {

// Tensor of n equal entries with the given L2 norm.
Tensor<float> with_norm(std::size_t n, double norm) {
  return Tensor<float>({n}, static_cast<float>(norm / std::sqrt(static_cast<double>(n))));
}

struct Moments {
  double mean, sd;
};

Moments moments(const Tensor<float>& delta) {
  double m = 0, v = 0;
  for (float x : delta.values) m += x;
  m /= delta.size();
  for (float x : delta.values) v += (x - m) * (x - m);
  return {m, std::sqrt(v / (delta.size() - 1))};
}

}  // namespace

TEST(L2Norm, Basics) {
  EXPECT_DOUBLE_EQ(l2_norm(Tensor<float>({2}, {3, 4})), 5.0);
  EXPECT_DOUBLE_EQ(l2_norm(Tensor<float>({3, 3}, 0.0f)), 0.0);
}

TEST(L2Norm, MatchesDoubleAccumulation) {
  Rng rng(1);
  std::normal_distribution<float> n;
  Tensor<float> t({10, 10});
  for (auto& v : t.values) v = n(rng);
  long double s = 0;
  for (float v : t.values) s += static_cast<long double>(v) * v;
  const double oracle = std::sqrt(static_cast<double>(s));
  EXPECT_NEAR(l2_norm(t), oracle, 1e-5 * oracle);
}

TEST(Perturb, ZeroEpsilonIsBitIdentical) {
  EncoderConfig c;
  c.vocab_size = 30;
  c.model_dim = 8;
  c.ff_dim = 16;
  const auto p = init_encoder<float>(c, 1);
  PerturbationConfig cfg;
  cfg.seed = 99;
  const auto out = perturb(p, cfg);
  EXPECT_EQ(checksum(out.params), checksum(p));
  for (const auto& [name, t] : p) EXPECT_EQ(out.params.at(name).values, t.values) << name;
}

TEST(Perturb, ConfiguredSigmaIsEpsilonTimesNorm) {
  EXPECT_NEAR(noise_sigma(Tensor<float>({2}, {3, 4}), 0.01), 0.05, 1e-12);
  EXPECT_NEAR(noise_sigma(Tensor<float>({2}, {3, 4}), 0.01, NoiseScale::variance), std::sqrt(0.05), 1e-12);
}

// 10^5 draws for a tensor of norm 5 at eps = 0.01: sigma = 0.05.
TEST(Perturb, NoiseMomentsMatchConfiguredSigma) {
  const std::size_t n = 100000;
  ParamMap<float> p;
  p.emplace("w", with_norm(n, 5.0));
  PerturbationConfig cfg;
  cfg.epsilon = 0.01;
  cfg.seed = 2024;
  const auto noise = sample_noise(p, cfg);
  const auto m = moments(noise.at("w"));
  EXPECT_LT(std::abs(m.mean), 3 * 0.05 / std::sqrt(double(n)));
  EXPECT_NEAR(m.sd, 0.05, 0.02 * 0.05);
  const auto out = perturb(p, cfg);
  for (std::size_t i = 0; i < 10; ++i)
    EXPECT_EQ(out.params.at("w").values[i], p.at("w").values[i] + noise.at("w").values[i]);
}

TEST(Perturb, HigherNormGetsLargerSigma) {
  ParamMap<float> p;
  p.emplace("big", with_norm(20000, 9.0));
  p.emplace("small", with_norm(20000, 3.0));
  PerturbationConfig cfg;
  cfg.epsilon = 0.002;
  cfg.seed = 5;
  EXPECT_GT(noise_sigma(p.at("big"), cfg.epsilon), noise_sigma(p.at("small"), cfg.epsilon));
  const auto noise = sample_noise(p, cfg);
  EXPECT_GT(moments(noise.at("big")).sd, moments(noise.at("small")).sd);
}

TEST(Perturb, SourceUntouchedAndDeterministic) {
  EncoderConfig c;
  c.vocab_size = 30;
  c.model_dim = 8;
  c.ff_dim = 16;
  const auto p = init_encoder<float>(c, 3);
  const auto before = checksum(p);
  PerturbationConfig cfg;
  cfg.epsilon = 1e-2;
  cfg.seed = 77;
  const auto a = perturb(p, cfg), b = perturb(p, cfg);
  EXPECT_EQ(checksum(p), before);
  EXPECT_EQ(a.source_checksum, before);
  EXPECT_EQ(a.seed, 77u);
  EXPECT_EQ(checksum(a.params), checksum(b.params));
  EXPECT_NE(checksum(a.params), before);
  cfg.seed = 78;
  EXPECT_NE(checksum(perturb(p, cfg).params), checksum(a.params));
}

TEST(Perturb, IncludeListLimitsTensors) {
  ParamMap<float> p;
  p.emplace("classifier.weight", with_norm(16, 2.0));
  p.emplace("layer0.ffn.in.weight", with_norm(16, 2.0));
  PerturbationConfig cfg;
  cfg.epsilon = 0.1;
  cfg.seed = 1;
  cfg.include = {"classifier."};
  const auto out = perturb(p, cfg);
  EXPECT_NE(out.params.at("classifier.weight").values, p.at("classifier.weight").values);
  EXPECT_EQ(out.params.at("layer0.ffn.in.weight").values, p.at("layer0.ffn.in.weight").values);
}

TEST(Perturb, NegativeEpsilonRejected) {
  PerturbationConfig cfg;
  cfg.epsilon = -1;
  EXPECT_THROW(perturb(ParamMap<float>{}, cfg), ConfigError);
}

TEST(Perturb, FreshNoiseEveryStep) {
  TrainConfig cfg;
  cfg.epsilon = 1e-2;
  EXPECT_NE(step_perturbation(cfg, 5, 1).seed, step_perturbation(cfg, 5, 2).seed);
  EXPECT_EQ(step_perturbation(cfg, 5, 3).seed, step_perturbation(cfg, 5, 3).seed);
}
