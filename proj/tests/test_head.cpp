#include "helpers.hpp"

#include <gtest/gtest.h>

using namespace mddnet;

TEST(Loss, SmoothedBceKnownValue) {
  // ys = 0.95: −(0.95·ln 0.8 + 0.05·ln 0.2)
  EXPECT_NEAR(bce_smoothed(0.8, 1.0, 0.1), 0.2924, 1e-4);
  EXPECT_NEAR(bce_smoothed(0.8, 1.0, 0.1), -(0.95 * std::log(0.8) + 0.05 * std::log(0.2)), 1e-15);
}

TEST(Loss, FocalKnownValue) {
  // 1·(1 − 0.9)²·(−ln 0.9)
  EXPECT_NEAR(focal(0.9, 1.0, 1.0, 2.0, 0.0), 1.0536e-3, 1e-7);
}

TEST(Loss, FocalWithGammaZeroEqualsBce) {
  for (double p : {1e-9, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0})
    for (double y : {0.0, 1.0})
      for (double eps : {0.0, 0.1, 0.3}) EXPECT_NEAR(focal(p, y, 1.0, 0.0, eps), bce_smoothed(p, y, eps), 1e-12);
}

TEST(Loss, ClampKeepsValuesFinite) {
  for (double p : {0.0, 1.0}) {
    EXPECT_TRUE(std::isfinite(bce_smoothed(p, 1.0, 0.0)));
    EXPECT_TRUE(std::isfinite(bce_smoothed(p, 0.0, 0.0)));
  }
}

TEST(Loss, L2OfThreeFourIsTwentyFive) {
  ParameterSet<double> ps;
  const auto w = ps.add("w", 1, 2, ParamKind::Weight);
  ps.value(w) << 3, 4;
  const auto g = ps.add("g", 1, 2, ParamKind::NormScale);
  ps.value(g) << 10, 10;
  const auto b = ps.add("buf", 1, 1, ParamKind::Buffer);
  ps.value(b)(0, 0) = 100;
  EXPECT_EQ(l2_penalty(ps, 1.0), 25.0);
}

TEST(Loss, TotalIsSumOfParts) {
  ParameterSet<double> ps;
  const auto w = ps.add("w", 2, 2, ParamKind::Weight);
  ps.value(w) << 1, -2, 0.5, 3;
  const auto bias = ps.add("b", 1, 2, ParamKind::Bias);
  ps.value(bias) << 0.25, 0;
  LossConfig c;
  c.lambda = 0.01;
  const std::vector<double> p{0.1, 0.6, 0.95, 0.4};
  const std::vector<double> y{0, 1, 1, 0};
  const auto b = total_loss(p, y, ps, c);
  double bce = 0, foc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double ys = y[i] * 0.9 + 0.05;
    const double l = -(ys * std::log(p[i]) + (1 - ys) * std::log(1 - p[i]));
    bce += l;
    foc += (1 - p[i]) * (1 - p[i]) * l;
  }
  bce /= 4;
  foc /= 4;
  const double l2 = 0.01 * (1 + 4 + 0.25 + 9 + 0.0625);
  EXPECT_NEAR(b.bce, bce, 1e-12);
  EXPECT_NEAR(b.focal, foc, 1e-12);
  EXPECT_NEAR(b.l2, l2, 1e-15);
  EXPECT_DOUBLE_EQ(b.total(), b.bce + b.focal + b.l2);
}

TEST(Loss, SampleGradientMatchesFiniteDifference) {
  for (bool symmetric : {false, true})
    for (double gamma : {0.0, 1.0, 2.0, 2.5})
      for (double y : {0.0, 1.0})
        for (double p : {0.05, 0.3, 0.5, 0.8, 0.97}) {
          LossConfig c;
          c.gamma = gamma;
          c.phi = 0.7;
          c.symmetric_focal = symmetric;
          const double h = 1e-6;
          auto f = [&](double q) {
            const auto s = sample_loss(q, y, c);
            return s.bce + s.focal;
          };
          const double num = (f(p + h) - f(p - h)) / (2 * h);
          EXPECT_NEAR(sample_loss(p, y, c).d_p1, num, 1e-6 * std::max(1.0, std::abs(num)))
              << "p " << p << " y " << y << " gamma " << gamma << " sym " << symmetric;
        }
}

TEST(Loss, SymmetricFocalDownweightsEasyNegatives) {
  LossConfig asym;
  LossConfig sym;
  sym.symmetric_focal = true;
  // y = 0 with p1 = 0.1 is an easy negative: modulator (0.1)² vs (0.9)².
  const double b = bce_smoothed(0.1, 0.0, 0.1);
  EXPECT_NEAR(focal(0.1, 0.0, sym), 0.01 * b, 1e-12);
  EXPECT_NEAR(focal(0.1, 0.0, asym), 0.81 * b, 1e-12);
  EXPECT_NEAR(focal(0.7, 1.0, sym), focal(0.7, 1.0, asym), 1e-15);
}

TEST(Loss, L2GradientIsTwoLambdaTheta) {
  ParameterSet<double> ps;
  const auto w = ps.add("w", 1, 2, ParamKind::Weight);
  ps.value(w) << 3, -4;
  const auto g = ps.add("g", 1, 1, ParamKind::NormScale);
  auto grads = ps.zeros_like();
  add_l2_gradient(ps, 0.5, grads);
  EXPECT_DOUBLE_EQ(grads[w](0, 0), 3.0);
  EXPECT_DOUBLE_EQ(grads[w](0, 1), -4.0);
  EXPECT_DOUBLE_EQ(grads[g](0, 0), 0.0);
}

TEST(Decision, StrictThreshold) {
  EXPECT_EQ(decide(0.5), Label::Normal);
  EXPECT_EQ(decide(0.5000001), Label::Depression);
  EXPECT_EQ(decide(0.2), Label::Normal);
}

TEST(Detect, AlphaAndProbabilitiesAreDistributions) {
  std::mt19937_64 rng(4);
  ModelConfig c;
  c.d_a = 2;
  c.d_v = 3;
  c.head_hidden = 4;
  ParameterSet<double> ps;
  const auto h = register_head(ps, c);
  ps.initialize(5);
  const Mask mask{1, 1, 0, 1, 0, 1};
  Tape<double> t;
  ParamBinder<double> pb(t, ps);
  const auto d = detect(pb, h, t.constant(testing_util::random_matrix(6, c.d_z(), rng)), mask);
  const auto& alpha = t.value(d.alpha);
  EXPECT_NEAR(alpha.sum(), 1.0, 1e-12);
  EXPECT_EQ(alpha(0, 2), 0.0);
  EXPECT_EQ(alpha(0, 4), 0.0);
  EXPECT_NEAR(t.value(d.p).sum(), 1.0, 1e-12);
  EXPECT_EQ(t.value(d.p).cols(), 2);
}
