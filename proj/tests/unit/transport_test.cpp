#include <gtest/gtest.h>

#include <cmath>

#include "raysolve/transport.hpp"
#include "test_support.hpp"

namespace raysolve {
namespace {

TEST(OrdinateSet, EqualWeightsSumToTwoPi) {
  const OrdinateSet o(12);
  EXPECT_NEAR(o.weight() * static_cast<double>(o.size()), kTwoPi, 1e-14);
  for (std::size_t k = 0; k < o.size(); ++k) EXPECT_NEAR(norm(o.direction(k)), 1.0, 1e-15);
  EXPECT_NEAR(o.theta_of(0), kPi / 12.0, 1e-15);
  EXPECT_THROW(OrdinateSet(3), Error);
}

TEST(BackwardExitDistance, AxisAndDiagonalDirections) {
  EXPECT_DOUBLE_EQ(backward_exit_distance({0.5, 0.5}, {1.0, 0.0}), 0.5);
  EXPECT_DOUBLE_EQ(backward_exit_distance({0.2, 0.7}, {0.0, -1.0}), 0.3);
  EXPECT_NEAR(backward_exit_distance({0.5, 0.5}, {std::sqrt(0.5), std::sqrt(0.5)}), std::sqrt(0.5), 1e-15);
  EXPECT_EQ(backward_exit_distance({0.0, 0.5}, {1.0, 0.0}), 0.0);
}

TEST(CharacteristicIntegral, ZeroSourceGivesZero) {
  const KernelEval k = KernelEval::with_default_strategy(Medium::homogeneous(0.2, 2.0));
  const auto zero = [](Point) { return 0.0; };
  EXPECT_EQ(characteristic_integral(k, {0.3, 0.6}, {0.6, 0.8}, zero, 1.0 / 32, 4), 0.0);
}

TEST(CharacteristicIntegral, ConstantSourceMatchesClosedForm) {
  const KernelEval k = KernelEval::with_default_strategy(Medium::homogeneous(0.2, 2.0));
  const double q0 = 1.7, mu = 2.2;
  const auto q = [q0](Point) { return q0; };
  for (Point x : {Point{0.5, 0.5}, Point{0.9, 0.2}, Point{0.01, 0.99}}) {
    const Point v{0.6, -0.8};
    const double tau = backward_exit_distance(x, v);
    const double exact = q0 * (1.0 - std::exp(-mu * tau)) / mu;
    EXPECT_NEAR(characteristic_integral(k, x, v, q, 1.0 / 32, 64), exact, 1e-7 * exact);
  }
}

TEST(CharacteristicIntegral, VanishingAttenuationGivesSourceTimesLength) {
  const KernelEval k = KernelEval::with_default_strategy(Medium::homogeneous(1e-12, 0.0));
  const auto q = [](Point) { return 2.0; };
  const Point x{0.4, 0.3}, v{1.0, 0.0};
  EXPECT_NEAR(characteristic_integral(k, x, v, q, 1.0 / 16, 4), 2.0 * 0.4, 1e-11);
}

TEST(CharacteristicIntegral, QuadratureDepthConvergesOnInhomogeneousMedium) {
  const KernelEval k(testing::analytic_bump_medium(), LineStrategy::Quadrature);
  const auto q = [](Point p) { return 1.0 + p.x; };
  const Point x{0.8, 0.7}, v{std::sqrt(0.5), std::sqrt(0.5)};
  const double ref = characteristic_integral(k, x, v, q, 1.0 / 32, 256);
  double prev = std::numeric_limits<double>::infinity();
  for (int m : {1, 4, 16}) {
    const double err = std::abs(characteristic_integral(k, x, v, q, 1.0 / 32, m) - ref);
    EXPECT_LT(err, prev) << "m=" << m;
    prev = err;
  }
  EXPECT_LT(prev / ref, 1e-5);
}

TEST(CharacteristicIntegral, MoreAbsorptionAttenuatesMore) {
  const auto q = [](Point) { return 1.0; };
  double prev = std::numeric_limits<double>::infinity();
  for (double mu_a : {0.1, 0.5, 2.0, 8.0}) {
    const KernelEval k = KernelEval::with_default_strategy(Medium::homogeneous(mu_a, 1.0));
    const double v = characteristic_integral(k, {0.7, 0.6}, {0.8, 0.6}, q, 1.0 / 32, 4);
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(AngularAverage, ConstantFieldGivesTwoPiTimesValue) {
  const OrdinateSet o(16);
  const AngularField phi{5, 16, std::vector<double>(80, 0.25)};
  for (double v : angular_average(phi, o)) EXPECT_NEAR(v, kTwoPi * 0.25, 1e-14);
}

TEST(AngularAverage, RejectsMismatchedOrdinates) {
  const AngularField phi{5, 16, std::vector<double>(80, 0.25)};
  try {
    angular_average(phi, OrdinateSet(8));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(Sweep, ZeroSourceGivesZeroField) {
  const Grid2D g = build_grid(8);
  const KernelEval k = KernelEval::with_default_strategy(Medium::homogeneous(0.2, 2.0));
  const AngularField phi = sweep(g, k, ScalarField(g.size(), 0.0), OrdinateSet(8));
  for (double v : phi.values) EXPECT_EQ(v, 0.0);
}

TEST(Sweep, QuarterTurnEquivariance) {
  const std::size_t nx = 16;
  const Grid2D g = build_grid(nx);
  const KernelEval k = KernelEval::with_default_strategy(Medium::homogeneous(0.2, 2.0));
  ScalarField Q(g.size());
  for (std::size_t i = 0; i < Q.size(); ++i) Q[i] = std::exp(-8.0 * std::pow(distance(g.nodes[i], {0.5, 0.5}), 2));
  const OrdinateSet ords(8);
  const AngularField phi = sweep(g, k, Q, ords);
  // (x, y) -> (1 - y, x) maps node (p, q) to (nx - 1 - q, p) and v_k to v_{k + 2}.
  for (std::size_t q = 0; q < nx; ++q)
    for (std::size_t p = 0; p < nx; ++p) {
      const std::size_t i = q * nx + p, j = p * nx + (nx - 1 - q);
      for (std::size_t d = 0; d < ords.size(); ++d)
        EXPECT_NEAR(phi.at(j, (d + 2) % ords.size()), phi.at(i, d), 1e-12);
    }
}

TEST(Sweep, RejectsBadInputs) {
  const Grid2D g = build_grid(4);
  const KernelEval k = KernelEval::with_default_strategy(Medium::homogeneous(0.2, 2.0));
  EXPECT_THROW(sweep(g, k, ScalarField(15, 0.0), OrdinateSet(8)), Error);
  EXPECT_THROW(sweep(g, k, ScalarField(16, 0.0), OrdinateSet(8), 0), Error);
}

TEST(RecoverySource, CombinesScatteringAndEmission) {
  const Grid2D g = build_grid(4);
  const Medium m = Medium::homogeneous(0.2, 2.0);
  const ScalarField U(16, 3.0), f(16, 1.0);
  for (double v : recovery_source(g, m, U, f)) EXPECT_NEAR(v, 7.0 / kTwoPi, 1e-15);
}

}  // namespace
}  // namespace raysolve
