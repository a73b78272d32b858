#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <optional>
#include <random>

#include "raysolve/medium.hpp"
#include "test_support.hpp"

namespace raysolve {
namespace {

using testing::cosine_medium;
using testing::fourier_bump_medium;

TEST(LineIntegralQuadrature, ConstantIntegrandIsExactForAnyPanelCount) {
  const Medium m = Medium::homogeneous(0.2, 2.0);
  for (int panels : {1, 7, 64}) EXPECT_NEAR(line_integral_quadrature(m, {0, 0}, {1, 0}, panels), 2.2, 1e-14);
}

TEST(LineIntegralQuadrature, ZeroLengthSegmentGivesZero) {
  const Medium m = Medium::homogeneous(0.2, 2.0);
  EXPECT_EQ(line_integral_quadrature(m, {0.3, 0.4}, {0.3, 0.4}, 16), 0.0);
  EXPECT_EQ(line_integral_gauss(m, {0.3, 0.4}, {0.3, 0.4}, 2), 0.0);
  EXPECT_EQ(line_integral_fft(cosine_medium(), {0.3, 0.4}, {0.3, 0.4}), 0.0);
}

TEST(LineIntegralQuadrature, CosineMediumOverOnePeriod) {
  EXPECT_NEAR(line_integral_quadrature(cosine_medium(), {0, 0}, {1, 0}, 64), 3.0, 1e-10);
}

TEST(LineIntegralQuadrature, RejectsZeroPanels) {
  const Medium m = Medium::homogeneous(0.2, 2.0);
  try {
    line_integral_quadrature(m, {0, 0}, {1, 0}, 0);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
  }
}

TEST(LineIntegralFft, ConstantMediumGivesMuTimesLength) {
  const Medium m = Medium::fourier_periodic(FourierSeries::constant(0.2), FourierSeries::constant(2.0));
  const Point x{0.1, 0.9}, y{0.8, 0.05};
  EXPECT_NEAR(line_integral_fft(m, x, y), 2.2 * distance(x, y), 1e-14);
}

TEST(LineIntegralFft, MatchesIndependentOracleOnCosineMedium) {
  // Reference from an adaptive scalar quadrature of 3 + 2 cos(2 pi x1).
  EXPECT_NEAR(line_integral_fft(cosine_medium(), {0.1, 0.2}, {0.7, 0.9}), 2.0131973244028467, 1e-12);
}

TEST(LineIntegralFft, MatchesFineQuadrature) {
  const Medium m = cosine_medium();
  EXPECT_NEAR(line_integral_fft(m, {0.1, 0.2}, {0.7, 0.9}), line_integral_quadrature(m, {0.1, 0.2}, {0.7, 0.9}, 4096),
              1e-7);
}

TEST(LineIntegralFft, ModeOrthogonalToDirectionContributesTimesLength) {
  // mu = 3 + 2 cos(2 pi x2) along a horizontal segment: k . v = 0 for every mode.
  using C = std::complex<double>;
  std::vector<C> c(9, C(0.0, 0.0));
  c[4] = 2.0;
  c[1] = 1.0;  // (0, -1)
  c[7] = 1.0;  // (0, 1)
  const Medium m = Medium::fourier_periodic(FourierSeries::constant(1.0), FourierSeries(2, c));
  const double y0 = 0.3, t = 0.55;
  EXPECT_NEAR(line_integral_fft(m, {0.2, y0}, {0.2 + t, y0}), t * (3.0 + 2.0 * std::cos(2.0 * kPi * y0)), 1e-13);
}

TEST(LineIntegralFft, RejectsNonFourierMedium) {
  try {
    line_integral_fft(Medium::homogeneous(0.2, 2.0), {0, 0}, {1, 1});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::WrongMediumKind);
  }
}

TEST(LineIntegralFft, QuadratureConvergesMonotonically) {
  const Medium m = fourier_bump_medium();
  std::mt19937 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Point x = testing::random_point(rng), y = testing::random_point(rng);
    const double exact = line_integral_fft(m, x, y);
    double prev = std::numeric_limits<double>::infinity();
    for (int panels : {64, 256, 1024}) {
      const double err = std::abs(line_integral_quadrature(m, x, y, panels) - exact);
      EXPECT_LE(err, prev) << "panels=" << panels;
      prev = err;
    }
  }
}

TEST(LineIntegralFft, PathReversalAndAdditivity) {
  const Medium m = fourier_bump_medium();
  std::mt19937 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Point x = testing::random_point(rng), y = testing::random_point(rng);
    const double xy = line_integral_fft(m, x, y);
    EXPECT_NEAR(xy, line_integral_fft(m, y, x), 1e-13 * std::max(1.0, xy));
    const Point z = x + 0.37 * (y - x);
    EXPECT_NEAR(line_integral_fft(m, x, z) + line_integral_fft(m, z, y), xy, 1e-12 * std::max(1.0, xy));
    EXPECT_GE(xy, 0.0);
    EXPECT_NEAR(line_integral_quadrature(m, x, y, 64), line_integral_quadrature(m, y, x, 64), 1e-12);
  }
}

TEST(BuildFourierMedium, ConstantFieldHasOnlyTheMean) {
  const SampledField a(8, 8, std::vector<double>(64, 0.2));
  const SampledField s(8, 8, std::vector<double>(64, 2.0));
  const Medium m = build_fourier_medium(a, s, 4);
  const FourierSeries& total = m.fourier_total();
  for (int n2 = -3; n2 <= 3; ++n2)
    for (int n1 = -3; n1 <= 3; ++n1) {
      const double expected = n1 == 0 && n2 == 0 ? 2.2 : 0.0;
      EXPECT_NEAR(std::abs(total.coeff(n1, n2) - expected), 0.0, 1e-12) << n1 << "," << n2;
    }
}

TEST(BuildFourierMedium, ReconstructsGaussianBumpOnSampleGrid) {
  const SampledField s = SampledField::from_function(32, 32, gaussian_bump_mu_s);
  const FourierSeries f = fourier_series(s, 16);
  double worst = 0.0;
  for (std::size_t j = 0; j < 32; ++j)
    for (std::size_t i = 0; i < 32; ++i) {
      const Point p{(i + 0.5) / 32.0, (j + 0.5) / 32.0};
      worst = std::max(worst, std::abs(f(p) - s.at(i, j)));
    }
  EXPECT_LT(worst, 1e-6);
}

TEST(BuildFourierMedium, TruncationBeyondNyquistIsRejected) {
  const SampledField s(16, 16, std::vector<double>(256, 1.0));
  try {
    fourier_series(s, 16);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TruncationTooLarge);
  }
}

TEST(FourierSeries, RejectsNonHermitianCoefficients) {
  using C = std::complex<double>;
  std::vector<C> c(9, C(0.0, 0.0));
  c[4] = 1.0;
  c[5] = C(0.0, 1.0);  // no conjugate partner at (-1, 0)
  EXPECT_THROW(FourierSeries(2, c), Error);
}

TEST(Medium, MuIsTheSumOfItsParts) {
  const Medium m = testing::analytic_bump_medium();
  for (Point p : {Point{0.1, 0.2}, Point{0.5, 0.5}, Point{0.9, 0.3}})
    EXPECT_DOUBLE_EQ(m.mu(p), m.mu_a(p) + m.mu_s(p));
  const Medium c = cosine_medium();
  EXPECT_NEAR(c.mu({0.25, 0.7}), 3.0, 1e-14);
  EXPECT_NEAR(c.mu({0.0, 0.7}), 5.0, 1e-14);
}

TEST(Medium, RejectsNonPhysicalCoefficients) {
  const auto code_of = [](auto&& build) -> std::optional<ErrorCode> {
    try {
      build();
    } catch (const Error& e) {
      return e.code();
    }
    return std::nullopt;
  };
  EXPECT_EQ(code_of([] { Medium::homogeneous(0.0, 2.0); }), ErrorCode::InvalidMedium);
  EXPECT_EQ(code_of([] { Medium::homogeneous(-0.1, 2.0); }), ErrorCode::InvalidMedium);
  EXPECT_EQ(code_of([] { Medium::homogeneous(0.2, -1.0); }), ErrorCode::InvalidMedium);
  EXPECT_EQ(code_of([] {
              Medium::analytic([](Point p) { return p.x - 0.5; }, [](Point) { return 1.0; }, "bad");
            }),
            ErrorCode::InvalidMedium);
  EXPECT_EQ(code_of([] { Medium::homogeneous(0.2, 2.0).fourier_total(); }), ErrorCode::WrongMediumKind);
}

TEST(Medium, FingerprintDistinguishesParameters) {
  EXPECT_EQ(Medium::homogeneous(0.2, 2.0).fingerprint(), Medium::homogeneous(0.2, 2.0).fingerprint());
  EXPECT_NE(Medium::homogeneous(0.2, 2.0).fingerprint(), Medium::homogeneous(0.2, 5.0).fingerprint());
  EXPECT_NE(cosine_medium().fingerprint(), fourier_bump_medium().fingerprint());
}

TEST(SampledField, BilinearReproducesLinearFunctionsAndClampsOutside) {
  const auto lin = [](Point p) { return 1.0 + 2.0 * p.x - 3.0 * p.y; };
  const SampledField f = SampledField::from_function(10, 10, lin);
  for (Point p : {Point{0.1, 0.1}, Point{0.33, 0.71}, Point{0.95, 0.05}, Point{0.01, 0.99}}) {
    const Point q{std::clamp(p.x, 0.05, 0.95), std::clamp(p.y, 0.05, 0.95)};
    EXPECT_NEAR(f(p), lin(q), 1e-13);
  }
}

TEST(GridSampledMedium, QuadratureRulesAgree) {
  const auto mu_s = [](Point p) { return 1.0 + p.x * p.y; };
  const Medium m = Medium::grid_sampled(SampledField(4, 4, std::vector<double>(16, 0.3)),
                                        SampledField::from_function(64, 64, mu_s));
  const Point x{0.1, 0.15}, y{0.85, 0.8};
  EXPECT_NEAR(line_integral_quadrature(m, x, y, 2048), line_integral_gauss(m, x, y, 64), 1e-5);
}

}  // namespace
}  // namespace raysolve
