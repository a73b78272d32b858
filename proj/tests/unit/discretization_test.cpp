#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "raysolve/discretization.hpp"
#include "test_support.hpp"

namespace raysolve {
namespace {

double max_abs_diff(const ScalarField& a, const ScalarField& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

TEST(BuildGrid, ThirtyTwoCellsPerAxis) {
  const Grid2D g = build_grid(32);
  EXPECT_EQ(g.size(), 1024u);
  EXPECT_DOUBLE_EQ(g.h, 1.0 / 32.0);
  EXPECT_DOUBLE_EQ(g.nodes[0].x, 1.0 / 64.0);
  EXPECT_DOUBLE_EQ(g.nodes[0].y, 1.0 / 64.0);
  EXPECT_NEAR(std::accumulate(g.weights.begin(), g.weights.end(), 0.0), 1.0, 1e-14);
  // Row-major with p fastest.
  EXPECT_DOUBLE_EQ(g.nodes[33].x, 3.0 / 64.0);
  EXPECT_DOUBLE_EQ(g.nodes[33].y, 3.0 / 64.0);
}

TEST(BuildGrid, TwoCellsPerAxis) {
  const Grid2D g = build_grid(2);
  ASSERT_EQ(g.size(), 4u);
  EXPECT_EQ(g.nodes[0], (Point{0.25, 0.25}));
  EXPECT_EQ(g.nodes[1], (Point{0.75, 0.25}));
  EXPECT_EQ(g.nodes[2], (Point{0.25, 0.75}));
  EXPECT_EQ(g.nodes[3], (Point{0.75, 0.75}));
}

TEST(BuildGrid, RejectsBadResolutions) {
  for (std::size_t nx : {0u, 1u, 5000u}) {
    try {
      build_grid(nx);
      FAIL() << "nx=" << nx;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidResolution);
    }
  }
}

TEST(SelfContribution, UnitSquareWithoutAttenuationMatchesOracle) {
  // (1 / 2 pi) * integral of 1/r over [-1/2, 1/2]^2 = (2 / pi) ln(1 + sqrt 2).
  EXPECT_NEAR(detail::polar_cell_integral(0.0, 0.5) / kTwoPi, 0.5610998523391799, 1e-13);
  EXPECT_NEAR(detail::polar_cell_integral(0.0, 0.5) / kTwoPi, 2.0 / kPi * std::log(1.0 + std::sqrt(2.0)), 1e-13);
}

TEST(SelfContribution, MatchesOracleAndHalvesWithH) {
  const KernelEval k = KernelEval::with_default_strategy(Medium::homogeneous(0.2, 2.0));
  const double s32 = self_contribution(build_grid(32), k).diag[0];
  const double s64 = self_contribution(build_grid(64), k).diag[0];
  EXPECT_NEAR(s32, 0.03439377691650302, 1e-14);
  EXPECT_NEAR(s64, 0.017364521835951417, 1e-14);
  EXPECT_NEAR(s32 / s64, 2.0, 0.1);
}

TEST(SelfContribution, ZeroWhereScatteringVanishes) {
  const Medium m = Medium::analytic([](Point) { return 0.5; }, [](Point p) { return p.x < 0.5 ? 0.0 : 1.0; }, "half");
  const Grid2D g = build_grid(4);
  const SelfContribution sc = self_contribution(g, KernelEval(m, LineStrategy::Quadrature));
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g.nodes[i].x < 0.5) EXPECT_EQ(sc.diag[i], 0.0);
    else EXPECT_GT(sc.diag[i], 0.0);
  }
}

TEST(ApplyKDirect, FourNodeSystemMatchesOracle) {
  const Grid2D g = build_grid(2);
  const KernelEval k = KernelEval::with_default_strategy(Medium::homogeneous(0.2, 2.0));
  const SelfContribution sc = self_contribution(g, k);
  EXPECT_NEAR(sc.diag[0], 0.4176703254955106, 1e-14);
  const ScalarField out = apply_K_direct(g, k, sc, ScalarField(4, 1.0));
  for (double v : out) EXPECT_NEAR(v, 0.5473785527151059, 1e-14);
}

TEST(ApplyKDirect, ZeroInputAndZeroScattering) {
  const Grid2D g = build_grid(8);
  const KernelEval k = KernelEval::with_default_strategy(Medium::homogeneous(0.2, 2.0));
  const SelfContribution sc = self_contribution(g, k);
  for (double v : apply_K_direct(g, k, sc, ScalarField(g.size(), 0.0))) EXPECT_EQ(v, 0.0);

  const KernelEval k0 = KernelEval::with_default_strategy(Medium::homogeneous(0.2, 0.0));
  const SelfContribution sc0 = self_contribution(g, k0);
  for (double v : apply_K_direct(g, k0, sc0, testing::random_field(g.size(), 1))) EXPECT_EQ(v, 0.0);
}

TEST(ApplyKDirect, RejectsWrongSize) {
  const Grid2D g = build_grid(4);
  const KernelEval k = KernelEval::with_default_strategy(Medium::homogeneous(0.2, 2.0));
  const SelfContribution sc = self_contribution(g, k);
  try {
    apply_K_direct(g, k, sc, ScalarField(3, 1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(ApplyKDirect, IsLinear) {
  const Grid2D g = build_grid(12);
  const KernelEval k(testing::analytic_bump_medium(), LineStrategy::Quadrature);
  const SelfContribution sc = self_contribution(g, k);
  const ScalarField u = testing::random_field(g.size(), 2), v = testing::random_field(g.size(), 3);
  ScalarField w(g.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 2.5 * u[i] - 0.75 * v[i];
  const ScalarField ku = apply_K_direct(g, k, sc, u), kv = apply_K_direct(g, k, sc, v);
  const ScalarField kw = apply_K_direct(g, k, sc, w);
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(kw[i], 2.5 * ku[i] - 0.75 * kv[i], 1e-13);
}

TEST(DirectOperator, EveryCacheModeMatchesOnTheFlySummation) {
  const Grid2D g = build_grid(16);
  const ScalarField u = testing::random_field(g.size(), 4);
  for (const Medium& m : {Medium::homogeneous(0.2, 2.0), testing::analytic_bump_medium()}) {
    const KernelEval k = KernelEval::with_default_strategy(m);
    const SelfContribution sc = self_contribution(g, k);
    const ScalarField ref = apply_K_direct(g, k, sc, u);
    const DirectOperator cached(g, k, sc);
    const DirectOperator uncached(g, k, sc, 0);
    EXPECT_LT(max_abs_diff(cached.apply(u), ref), 1e-14);
    EXPECT_LT(max_abs_diff(uncached.apply(u), ref), 1e-14);
  }
}

TEST(DirectOperator, RowSumsBelowOneForShippedMedia) {
  const Grid2D g = build_grid(32);
  for (const Medium& m : {Medium::homogeneous(0.2, 2.0), Medium::homogeneous(0.2, 5.0),
                          Medium::homogeneous(0.2, 10.0), testing::analytic_bump_medium()}) {
    const KernelEval k = KernelEval::with_default_strategy(m);
    const DirectOperator op(g, k, self_contribution(g, k));
    const ScalarField rows = op.apply(ScalarField(g.size(), 1.0));
    EXPECT_LT(*std::max_element(rows.begin(), rows.end()), 1.0);
    EXPECT_GT(*std::min_element(rows.begin(), rows.end()), 0.0);
  }
}

TEST(DirectOperator, MeshRefinementDifferencesShrink) {
  // Compare K_h U with the cell average of K_{h/2} U over the four children.
  const KernelEval k = KernelEval::with_default_strategy(Medium::homogeneous(0.2, 2.0));
  const auto smooth = [](Point p) { return 1.0 + p.x * p.y; };
  const auto apply_on = [&](std::size_t nx) {
    const Grid2D g = build_grid(nx);
    ScalarField u(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) u[i] = smooth(g.nodes[i]);
    return DirectOperator(g, k, self_contribution(g, k)).apply(u);
  };
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t nx : {8u, 16u, 32u}) {
    const ScalarField coarse = apply_on(nx), fine = apply_on(2 * nx);
    double diff = 0.0;
    for (std::size_t q = 0; q < nx; ++q)
      for (std::size_t p = 0; p < nx; ++p) {
        const std::size_t f0 = (2 * q) * 2 * nx + 2 * p;
        const double avg = 0.25 * (fine[f0] + fine[f0 + 1] + fine[f0 + 2 * nx] + fine[f0 + 2 * nx + 1]);
        diff = std::max(diff, std::abs(coarse[q * nx + p] - avg));
      }
    EXPECT_LT(diff, prev) << "nx=" << nx;
    prev = diff;
  }
}

}  // namespace
}  // namespace raysolve
