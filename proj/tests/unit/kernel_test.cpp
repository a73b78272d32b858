#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "raysolve/kernel.hpp"
#include "test_support.hpp"

namespace raysolve {
namespace {

ErrorCode code_of_kernel(const Medium& m, LineStrategy s, int dim = 2) {
  try {
    KernelEval k(m, s, {}, dim);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected construction to fail";
  return ErrorCode::IoError;
}

TEST(Attenuation, CoincidentPointsGiveOne) {
  const KernelEval k = KernelEval::with_default_strategy(Medium::homogeneous(0.2, 2.0));
  EXPECT_EQ(k.attenuation({0.3, 0.3}, {0.3, 0.3}), 1.0);
}

TEST(Attenuation, HomogeneousMatchesOracle) {
  const KernelEval k = KernelEval::with_default_strategy(Medium::homogeneous(0.2, 2.0));
  EXPECT_NEAR(k.attenuation({0.1, 0.2}, {0.4, 0.6}), 0.33287108369807955, 1e-15);
}

TEST(Attenuation, NeverExceedsOne) {
  const KernelEval k(testing::analytic_bump_medium(), LineStrategy::Quadrature);
  std::mt19937 rng(3);
  for (int i = 0; i < 200; ++i) {
    const double e = k.attenuation(testing::random_point(rng), testing::random_point(rng));
    EXPECT_GT(e, 0.0);
    EXPECT_LE(e, 1.0);
  }
}

TEST(KernelValue, HomogeneousMatchesOracle) {
  const KernelEval k = KernelEval::with_default_strategy(Medium::homogeneous(0.2, 2.0));
  EXPECT_NEAR(k.value({0.1, 0.2}, {0.4, 0.6}), 0.21191231353162152, 1e-15);
}

TEST(KernelValue, ClosedFormIsBitwiseTheHomogeneousFormula) {
  const KernelEval k(Medium::homogeneous(0.2, 2.0), LineStrategy::ClosedForm);
  const Point x{0.15, 0.35}, y{0.8, 0.45};
  const double r = distance(x, y);
  const double mu = k.medium().mu(x);
  EXPECT_EQ(k.value(x, y), 2.0 * (std::exp(-(mu * r)) / (kTwoPi * r)));
}

TEST(KernelValue, VanishesWhereScatteringVanishes) {
  const Medium m = Medium::analytic([](Point) { return 0.5; }, [](Point p) { return p.x < 0.5 ? 0.0 : 1.0; }, "half");
  const KernelEval k(m, LineStrategy::Quadrature);
  EXPECT_EQ(k.value({0.9, 0.9}, {0.2, 0.3}), 0.0);
  EXPECT_GT(k.value({0.2, 0.3}, {0.9, 0.9}), 0.0);
}

TEST(KernelValue, SingularAtCoincidentPoints) {
  const KernelEval k = KernelEval::with_default_strategy(Medium::homogeneous(0.2, 2.0));
  try {
    k.value({0.5, 0.5}, {0.5, 0.5});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularPoint);
  }
}

TEST(KernelValue, PositiveAndDecreasingAlongRays) {
  const KernelEval k = KernelEval::with_default_strategy(Medium::homogeneous(0.2, 5.0));
  const Point x{0.2, 0.3}, v{0.6, 0.8};
  double prev = std::numeric_limits<double>::infinity();
  for (double t = 0.01; t < 0.8; t += 0.01) {
    const double val = k.value(x, x + t * v);
    EXPECT_GT(val, 0.0);
    EXPECT_LT(val, prev);
    prev = val;
  }
}

TEST(KernelEval, ConstructionGuards) {
  EXPECT_EQ(code_of_kernel(testing::analytic_bump_medium(), LineStrategy::ClosedForm), ErrorCode::WrongMediumKind);
  EXPECT_EQ(code_of_kernel(Medium::homogeneous(0.2, 2.0), LineStrategy::Fft), ErrorCode::WrongMediumKind);
  EXPECT_EQ(code_of_kernel(Medium::homogeneous(0.2, 2.0), LineStrategy::ClosedForm, 3), ErrorCode::DimensionMismatch);
}

TEST(KernelEval, DefaultStrategyFollowsMediumKind) {
  EXPECT_EQ(KernelEval::with_default_strategy(Medium::homogeneous(0.2, 2.0)).strategy(), LineStrategy::ClosedForm);
  EXPECT_EQ(KernelEval::with_default_strategy(testing::cosine_medium()).strategy(), LineStrategy::Fft);
  EXPECT_EQ(KernelEval::with_default_strategy(testing::analytic_bump_medium()).strategy(), LineStrategy::Quadrature);
}

TEST(KernelEval, FftAgreesWithFineQuadratureOnBumpMedium) {
  const Medium m = testing::fourier_bump_medium();
  const KernelEval fft(m, LineStrategy::Fft);
  const KernelEval quad(m, LineStrategy::Quadrature, {QuadratureSpec::Rule::Midpoint, 4096});
  std::mt19937 rng(2024);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Point x = testing::random_point(rng), y = testing::random_point(rng);
    const double a = fft.value(x, y), b = quad.value(x, y);
    worst = std::max(worst, std::abs(a - b) / b);
  }
  EXPECT_LT(worst, 1e-7);
}

TEST(KernelEval, QuadratureMatchesClosedFormOnConstantMedium) {
  const Medium m = Medium::homogeneous(0.2, 2.0);
  const KernelEval closed(m, LineStrategy::ClosedForm);
  const KernelEval quad(m, LineStrategy::Quadrature);
  std::mt19937 rng(5);
  for (int i = 0; i < 200; ++i) {
    const Point x = testing::random_point(rng), y = testing::random_point(rng);
    EXPECT_NEAR(quad.value(x, y) / closed.value(x, y), 1.0, 1e-12);
  }
}

TEST(KernelEval, GaussAndMidpointAgreeOnAnalyticMedium) {
  const Medium m = testing::analytic_bump_medium();
  const KernelEval gauss(m, LineStrategy::Quadrature);
  const KernelEval mid(m, LineStrategy::Quadrature, {QuadratureSpec::Rule::Midpoint, 4096});
  std::mt19937 rng(9);
  for (int i = 0; i < 200; ++i) {
    const Point x = testing::random_point(rng), y = testing::random_point(rng);
    EXPECT_NEAR(gauss.optical_depth(x, y), mid.optical_depth(x, y), 1e-8);
  }
}

}  // namespace
}  // namespace raysolve
