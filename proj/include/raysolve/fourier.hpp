#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "raysolve/error.hpp"
#include "raysolve/geometry.hpp"
#include "raysolve/sampled_field.hpp"

namespace raysolve {

/// Truncated Fourier series of a real 1-periodic function on the unit square,
///
///   g(x) = sum_{|n1|,|n2| < Q} c_n exp(i 2 pi n . x),
///
/// with Hermitian coefficients c_{-n} = conj(c_n).
class FourierSeries {
 public:
  using Complex = std::complex<double>;

  FourierSeries() = default;

  /// `coeffs` is indexed by (n1 + Q - 1) + (2Q - 1) * (n2 + Q - 1).
  FourierSeries(int q, std::vector<Complex> coeffs) : q_(q), coeffs_(std::move(coeffs)) {
    require(q_ >= 1, ErrorCode::InvalidMedium, "Fourier truncation order must be >= 1");
    require(coeffs_.size() == width() * width(), ErrorCode::DimensionMismatch,
            "Fourier coefficient count must be (2Q-1)^2");
    double scale = 0.0;
    for (const auto& c : coeffs_) scale = std::max(scale, std::abs(c));
    for (int n2 = -(q_ - 1); n2 < q_; ++n2)
      for (int n1 = -(q_ - 1); n1 < q_; ++n1)
        require(std::abs(coeff(n1, n2) - std::conj(coeff(-n1, -n2))) <= 1e-12 * std::max(scale, 1.0),
                ErrorCode::InvalidMedium, "Fourier coefficients are not Hermitian; the series would not be real");
  }

  static FourierSeries constant(double value) { return FourierSeries(1, {Complex(value, 0.0)}); }

  int order() const { return q_; }
  std::size_t width() const { return static_cast<std::size_t>(2 * q_ - 1); }
  const std::vector<Complex>& coefficients() const { return coeffs_; }

  Complex coeff(int n1, int n2) const {
    return coeffs_[static_cast<std::size_t>(n1 + q_ - 1) + width() * static_cast<std::size_t>(n2 + q_ - 1)];
  }

  double operator()(Point p) const {
    const auto ex = phases(p.x, 2.0 * kPi);
    const auto ey = phases(p.y, 2.0 * kPi);
    const std::size_t w = width();
    double sum = 0.0;
    for (std::size_t b = 0; b < w; ++b) {
      Complex row(0.0, 0.0);
      for (std::size_t a = 0; a < w; ++a) row += coeffs_[a + w * b] * ex[a];
      sum += (row * ey[b]).real();
    }
    return sum;
  }

  /// Exact integral of the series along the straight segment from x to y.
  ///
  /// Each mode contributes c_n e^{i2pi n.x} (e^{i2pi n.(y-x)} - 1) / (i2pi n.v),
  /// v the unit direction, which degenerates to t c_n e^{i2pi n.x} when
  /// n.v = 0. It is evaluated in the equivalent form
  /// t c_n e^{i2pi n.m} sin(pi n.d) / (pi n.d) with m the midpoint and
  /// d = y - x, which has no cancellation as n.d -> 0.
  double line_integral(Point x, Point y) const {
    const Point d = y - x;
    const double t = norm(d);
    if (t == 0.0) return 0.0;
    const Point mid = 0.5 * (x + y);
    const auto mx = phases(mid.x, 2.0 * kPi);
    const auto my = phases(mid.y, 2.0 * kPi);
    const auto px = phases(d.x, kPi);
    const auto py = phases(d.y, kPi);
    const std::size_t w = width();
    Complex sum(0.0, 0.0);
    for (std::size_t b = 0; b < w; ++b) {
      const double n2 = static_cast<double>(static_cast<int>(b) - (q_ - 1));
      for (std::size_t a = 0; a < w; ++a) {
        const double n1 = static_cast<double>(static_cast<int>(a) - (q_ - 1));
        const double arg = kPi * (n1 * d.x + n2 * d.y);
        // sin(pi n.d) through the separable phases keeps this loop free of libm calls.
        const double sinc = arg == 0.0 ? 1.0 : (px[a] * py[b]).imag() / arg;
        sum += coeffs_[a + w * b] * (mx[a] * my[b]) * sinc;
      }
    }
    require(std::abs(sum.imag()) * t <= 1e-10 * std::max(1.0, std::abs(sum.real()) * t), ErrorCode::InvalidMedium,
            "Fourier line integral has a non-negligible imaginary part");
    return t * sum.real();
  }

 private:
  // exp(i * scale * n * coord) for n = -(Q-1) .. Q-1.
  std::vector<Complex> phases(double coord, double scale) const {
    std::vector<Complex> out(width());
    for (int n = -(q_ - 1); n < q_; ++n) out[static_cast<std::size_t>(n + q_ - 1)] = std::polar(1.0, scale * n * coord);
    return out;
  }

  int q_ = 0;
  std::vector<Complex> coeffs_;
};

/// Discrete Fourier transform of cell-centred periodic samples, truncated to
/// |n| < Q per axis. Q may not exceed half the sample count on either axis.
inline FourierSeries fourier_series(const SampledField& samples, int q) {
  const std::size_t nx = samples.nx();
  const std::size_t ny = samples.ny();
  require(q >= 1, ErrorCode::TruncationTooLarge, "truncation order must be positive");
  require(static_cast<std::size_t>(2 * q) <= nx && static_cast<std::size_t>(2 * q) <= ny,
          ErrorCode::TruncationTooLarge, "truncation order Q exceeds the Nyquist limit of the sample grid");

  std::vector<std::complex<double>> buf(nx * ny);
  for (std::size_t k = 0; k < nx * ny; ++k) buf[k] = samples.values()[k];
  auto* data = reinterpret_cast<fftw_complex*>(buf.data());
  // Rows are y, columns x: an ny x nx row-major transform.
  fftw_plan plan = fftw_plan_dft_2d(static_cast<int>(ny), static_cast<int>(nx), data, data, FFTW_FORWARD, FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);

  const std::size_t w = static_cast<std::size_t>(2 * q - 1);
  const double norm_factor = 1.0 / static_cast<double>(nx * ny);
  auto raw = [&](int n1, int n2) {
    const std::size_t i = static_cast<std::size_t>((n1 + static_cast<int>(nx)) % static_cast<int>(nx));
    const std::size_t j = static_cast<std::size_t>((n2 + static_cast<int>(ny)) % static_cast<int>(ny));
    // Samples sit at (i + 1/2)/nx, hence the half-cell phase shift.
    const double shift = -kPi * (static_cast<double>(n1) / static_cast<double>(nx) +
                                 static_cast<double>(n2) / static_cast<double>(ny));
    return buf[j * nx + i] * norm_factor * std::polar(1.0, shift);
  };
  std::vector<std::complex<double>> coeffs(w * w);
  for (int n2 = -(q - 1); n2 < q; ++n2)
    for (int n1 = -(q - 1); n1 < q; ++n1) {
      // Symmetrise so the Hermitian property holds exactly, not just to rounding.
      const auto c = 0.5 * (raw(n1, n2) + std::conj(raw(-n1, -n2)));
      coeffs[static_cast<std::size_t>(n1 + q - 1) + w * static_cast<std::size_t>(n2 + q - 1)] = c;
    }
  return FourierSeries(q, std::move(coeffs));
}

/// Coefficient-wise sum of two series, padding the lower-order one with zeros.
inline FourierSeries operator+(const FourierSeries& a, const FourierSeries& b) {
  const int q = std::max(a.order(), b.order());
  const std::size_t w = static_cast<std::size_t>(2 * q - 1);
  std::vector<std::complex<double>> coeffs(w * w);
  for (int n2 = -(q - 1); n2 < q; ++n2)
    for (int n1 = -(q - 1); n1 < q; ++n1) {
      std::complex<double> c(0.0, 0.0);
      if (std::abs(n1) < a.order() && std::abs(n2) < a.order()) c += a.coeff(n1, n2);
      if (std::abs(n1) < b.order() && std::abs(n2) < b.order()) c += b.coeff(n1, n2);
      coeffs[static_cast<std::size_t>(n1 + q - 1) + w * static_cast<std::size_t>(n2 + q - 1)] = c;
    }
  return FourierSeries(q, std::move(coeffs));
}

}  // namespace raysolve
