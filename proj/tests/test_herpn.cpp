#include <gtest/gtest.h>

#include <cmath>

#include "qpi/herpn.hpp"
#include "qpi/rng.hpp"

namespace {

using namespace qpi;

// |fd - an| <= max(rel * max(|fd|, |an|), abs_floor)
void expect_grad_close(double an, double fd, const char* what, int idx) {
  double tol = std::max(1e-5 * std::max(std::abs(fd), std::abs(an)), 1e-7);
  EXPECT_LE(std::abs(fd - an), tol) << what << "[" << idx << "] analytic=" << an << " fd=" << fd;
}

TEST(HerPNTrain, WorkedTwoPointBatch) {
  // Batch {-1, +1}, one channel: basis 1 sees zero mean and unit variance,
  // basis 2 values vanish at both points, basis 0 contributes nothing.
  HerPNParams p = make_herpn(1);
  std::vector<double> out = herpn_forward_train({-1.0, 1.0}, 2, 1, p, nullptr);
  double expect = 0.5 / std::sqrt(1.0 + 1e-5);
  EXPECT_NEAR(out[1], expect, 1e-12);
  EXPECT_NEAR(out[0], -expect, 1e-12);
}

TEST(HerPNTrain, OutputMeanIsBeta) {
  HerPNParams p = make_herpn(3);
  Rng rng(7);
  for (unsigned c = 0; c < 3; ++c) {
    p.gamma[c] = rng.uniform(0.5, 1.5);
    p.beta[c] = rng.uniform(-1.0, 1.0);
  }
  const size_t B = 16, inner = 4;
  std::vector<double> x(B * 3 * inner);
  for (double& v : x) v = rng.uniform(-2.0, 2.0);
  std::vector<double> out = herpn_forward_train(x, B, inner, p, nullptr);
  for (unsigned c = 0; c < 3; ++c) {
    double m = 0.0;
    for (size_t b = 0; b < B; ++b)
      for (size_t j = 0; j < inner; ++j) m += out[(b * 3 + c) * inner + j];
    m /= static_cast<double>(B * inner);
    EXPECT_NEAR(m, p.beta[c], 1e-9) << "c=" << c;
  }
}

TEST(HerPNTrain, RunningStatsFollowEma) {
  HerPNParams p = make_herpn(2);
  EXPECT_FALSE(p.stats_populated);
  const size_t B = 6;
  Rng rng(11);
  std::vector<double> x(B * 2);
  for (double& v : x) v = rng.uniform(-1.5, 1.5);
  herpn_forward_train(x, B, 1, p, nullptr);
  EXPECT_TRUE(p.stats_populated);
  for (unsigned i = 0; i <= 2; ++i)
    for (unsigned c = 0; c < 2; ++c) {
      double mean = 0.0, var = 0.0;
      for (size_t b = 0; b < B; ++b) mean += hermite_h(i, x[b * 2 + c]);
      mean /= B;
      for (size_t b = 0; b < B; ++b) {
        double d = hermite_h(i, x[b * 2 + c]) - mean;
        var += d * d;
      }
      var /= B;
      EXPECT_NEAR(p.mean_at(i, c), 0.9 * 0.0 + 0.1 * mean, 1e-12);
      EXPECT_NEAR(p.var_at(i, c), 0.9 * 1.0 + 0.1 * var, 1e-12);
    }
}

TEST(HerPNTrain, RejectsDegenerateCalls) {
  HerPNParams p = make_herpn(2);
  EXPECT_THROW(herpn_forward_train({1.0, 2.0}, 1, 1, p, nullptr), std::invalid_argument);
  EXPECT_THROW(herpn_forward_train({1.0, 2.0, 3.0}, 2, 1, p, nullptr), std::invalid_argument);
  p.training = false;
  EXPECT_THROW(herpn_forward_train({1.0, 2.0, 3.0, 4.0}, 2, 1, p, nullptr), std::logic_error);
  EXPECT_THROW(make_herpn(0), std::invalid_argument);
  EXPECT_THROW(make_herpn(4, 5), std::invalid_argument);
}

HerPNParams frozen_identity(unsigned channels, unsigned degree = 2) {
  HerPNParams p = make_herpn(channels, degree);
  p.training = false;
  p.stats_populated = true;  // identity statistics from make_herpn
  p.eps = 0.0;
  return p;
}

TEST(HerPNInfer, FrozenIdentityStatsValues) {
  HerPNParams p = frozen_identity(1);
  std::vector<double> out = herpn_forward_infer({0.0, 1.0, -1.0}, 3, 1, p);
  EXPECT_NEAR(out[0], 0.199471, 1e-6);
  EXPECT_NEAR(out[1], 0.898942, 1e-6);
  EXPECT_NEAR(out[2], -0.101058, 1e-6);
}

TEST(HerPNInfer, MatchesRawSeriesAtHigherDegree) {
  HerPNParams p = frozen_identity(1, 4);
  HermiteSeries g4 = HermiteSeries::relu(4);
  for (double x = -3.0; x <= 3.0; x += 0.37) {
    std::vector<double> out = herpn_forward_infer({x}, 1, 1, p);
    EXPECT_NEAR(out[0], g4.eval(x), 1e-12) << "x=" << x;
  }
}

TEST(HerPNInfer, RejectsBadState) {
  HerPNParams p = make_herpn(1);
  EXPECT_THROW(herpn_forward_infer({1.0}, 1, 1, p), std::logic_error);  // still training
  p.training = false;
  EXPECT_THROW(herpn_forward_infer({1.0}, 1, 1, p), std::logic_error);  // unpopulated
}

TEST(Fold, IdentityStatistics) {
  FoldedQuadratic f = fold_to_quadratic(frozen_identity(1));
  EXPECT_NEAR(f.c2[0], 0.199471, 1e-6);
  EXPECT_NEAR(f.c1[0], 0.5, 1e-12);
  EXPECT_NEAR(f.c0[0], 0.199471, 1e-6);
}

TEST(Fold, GammaZeroCollapsesToBeta) {
  HerPNParams p = frozen_identity(2);
  p.gamma = {0.0, 0.0};
  p.beta = {0.7, -0.3};
  FoldedQuadratic f = fold_to_quadratic(p);
  for (unsigned c = 0; c < 2; ++c) {
    EXPECT_DOUBLE_EQ(f.c2[c], 0.0);
    EXPECT_DOUBLE_EQ(f.c1[c], 0.0);
    EXPECT_DOUBLE_EQ(f.c0[c], p.beta[c]);
  }
}

TEST(Fold, EquivalentToInferForRandomParams) {
  HerPNParams p = make_herpn(5);
  Rng rng(23);
  for (unsigned c = 0; c < 5; ++c) {
    p.gamma[c] = rng.uniform(0.5, 1.5);
    p.beta[c] = rng.uniform(-1.0, 1.0);
    for (unsigned i = 0; i <= 2; ++i) {
      p.mean_at(i, c) = rng.uniform(-1.0, 1.0);
      p.var_at(i, c) = rng.uniform(0.3, 2.0);
    }
  }
  p.training = false;
  p.stats_populated = true;
  FoldedQuadratic f = fold_to_quadratic(p);
  for (int t = 0; t < 10000; ++t) {
    double x = rng.uniform(-4.0, 4.0);
    unsigned c = static_cast<unsigned>(t % 5);
    std::vector<double> in(5, 0.0);
    in[c] = x;
    double got = herpn_forward_infer(in, 1, 1, p)[c];
    double poly = f.c2[c] * x * x + f.c1[c] * x + f.c0[c];
    ASSERT_NEAR(got, poly, 1e-9) << "c=" << c << " x=" << x;
  }
}

TEST(Fold, RejectsWrongDegreeOrMode) {
  EXPECT_THROW(fold_to_quadratic(frozen_identity(1, 3)), std::invalid_argument);
  HerPNParams p = make_herpn(1);
  EXPECT_THROW(fold_to_quadratic(p), std::logic_error);  // training mode
}

void run_herpn_gradcheck(unsigned degree) {
  const size_t B = 8, C = 4;
  HerPNParams p = make_herpn(C, degree);
  Rng rng(31 + degree);
  for (unsigned c = 0; c < C; ++c) {
    p.gamma[c] = rng.uniform(0.5, 1.5);
    p.beta[c] = rng.uniform(-0.5, 0.5);
  }
  std::vector<double> x(B * C), w(B * C);
  for (double& v : x) v = rng.uniform(-2.0, 2.0);
  for (double& v : w) v = rng.uniform(-1.0, 1.0);
  auto loss = [&](HerPNParams& q, const std::vector<double>& in) {
    std::vector<double> out = herpn_forward_train(in, B, 1, q, nullptr);
    double L = 0.0;
    for (size_t k = 0; k < out.size(); ++k) L += w[k] * out[k];
    return L;
  };
  HerPNCache cache;
  herpn_forward_train(x, B, 1, p, &cache);
  HerPNGrads g = herpn_backward(w, cache, p);
  const double h = 1e-4;
  for (size_t k = 0; k < x.size(); ++k) {
    std::vector<double> xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    double fd = (loss(p, xp) - loss(p, xm)) / (2.0 * h);
    expect_grad_close(g.x[k], fd, "dx", static_cast<int>(k));
  }
  for (unsigned c = 0; c < C; ++c) {
    HerPNParams pp = p, pm = p;
    pp.gamma[c] += h;
    pm.gamma[c] -= h;
    double fd = (loss(pp, x) - loss(pm, x)) / (2.0 * h);
    expect_grad_close(g.gamma[c], fd, "dgamma", static_cast<int>(c));
    pp = p;
    pm = p;
    pp.beta[c] += h;
    pm.beta[c] -= h;
    fd = (loss(pp, x) - loss(pm, x)) / (2.0 * h);
    expect_grad_close(g.beta[c], fd, "dbeta", static_cast<int>(c));
  }
  // beta gradient is the per-channel upstream sum; zero upstream zeroes all.
  for (unsigned c = 0; c < C; ++c) {
    double s = 0.0;
    for (size_t b = 0; b < B; ++b) s += w[b * C + c];
    EXPECT_NEAR(g.beta[c], s, 1e-12);
  }
  HerPNGrads z = herpn_backward(std::vector<double>(B * C, 0.0), cache, p);
  for (double v : z.x) EXPECT_DOUBLE_EQ(v, 0.0);
  for (double v : z.gamma) EXPECT_DOUBLE_EQ(v, 0.0);
  for (double v : z.beta) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(HerPNBackward, FiniteDifferenceDegree2) { run_herpn_gradcheck(2); }
TEST(HerPNBackward, FiniteDifferenceDegree3) { run_herpn_gradcheck(3); }

TEST(HerPNBackward, RejectsMissingCache) {
  HerPNParams p = make_herpn(1);
  HerPNCache empty;
  EXPECT_THROW(herpn_backward({1.0}, empty, p), std::logic_error);
}

TEST(BatchNorm, TrainNormalizesPerChannel) {
  BatchNormParams p = make_batchnorm(2);
  p.gamma = {1.5, 0.5};
  p.beta = {0.2, -0.4};
  Rng rng(41);
  const size_t B = 32;
  std::vector<double> x(B * 2);
  for (double& v : x) v = rng.uniform(-3.0, 3.0);
  std::vector<double> out = batchnorm_forward_train(x, B, 1, p, nullptr);
  for (unsigned c = 0; c < 2; ++c) {
    double m = 0.0, v = 0.0;
    for (size_t b = 0; b < B; ++b) m += out[b * 2 + c];
    m /= B;
    for (size_t b = 0; b < B; ++b) {
      double d = out[b * 2 + c] - m;
      v += d * d;
    }
    v /= B;
    EXPECT_NEAR(m, p.beta[c], 1e-9);
    EXPECT_NEAR(v, p.gamma[c] * p.gamma[c], 1e-4);  // eps keeps it slightly under
  }
}

TEST(BatchNorm, InferUsesRunningStats) {
  BatchNormParams p = make_batchnorm(1);
  p.training = false;
  p.stats_populated = true;
  p.run_mean = {0.5};
  p.run_var = {4.0};
  p.gamma = {2.0};
  p.beta = {1.0};
  std::vector<double> out = batchnorm_forward_infer({2.5}, 1, 1, p);
  EXPECT_NEAR(out[0], 2.0 * (2.5 - 0.5) / std::sqrt(4.0 + 1e-5) + 1.0, 1e-9);
  p.stats_populated = false;
  EXPECT_THROW(batchnorm_forward_infer({1.0}, 1, 1, p), std::logic_error);
}

TEST(BatchNorm, FiniteDifference) {
  const size_t B = 8, C = 4;
  BatchNormParams p = make_batchnorm(C);
  Rng rng(53);
  for (unsigned c = 0; c < C; ++c) {
    p.gamma[c] = rng.uniform(0.5, 1.5);
    p.beta[c] = rng.uniform(-0.5, 0.5);
  }
  std::vector<double> x(B * C), w(B * C);
  for (double& v : x) v = rng.uniform(-2.0, 2.0);
  for (double& v : w) v = rng.uniform(-1.0, 1.0);
  auto loss = [&](BatchNormParams& q, const std::vector<double>& in) {
    std::vector<double> out = batchnorm_forward_train(in, B, 1, q, nullptr);
    double L = 0.0;
    for (size_t k = 0; k < out.size(); ++k) L += w[k] * out[k];
    return L;
  };
  BatchNormCache cache;
  batchnorm_forward_train(x, B, 1, p, &cache);
  BatchNormGrads g = batchnorm_backward(w, cache, p);
  const double h = 1e-4;
  for (size_t k = 0; k < x.size(); ++k) {
    std::vector<double> xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    double fd = (loss(p, xp) - loss(p, xm)) / (2.0 * h);
    expect_grad_close(g.x[k], fd, "dx", static_cast<int>(k));
  }
  for (unsigned c = 0; c < C; ++c) {
    BatchNormParams pp = p, pm = p;
    pp.gamma[c] += h;
    pm.gamma[c] -= h;
    double fd = (loss(pp, x) - loss(pm, x)) / (2.0 * h);
    expect_grad_close(g.gamma[c], fd, "dgamma", static_cast<int>(c));
  }
}

}  // namespace
