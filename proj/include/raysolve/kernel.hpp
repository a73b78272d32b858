#pragma once

#include <algorithm>
#include <cmath>
#include <string_view>

#include "raysolve/error.hpp"
#include "raysolve/geometry.hpp"
#include "raysolve/medium.hpp"

namespace raysolve {

enum class LineStrategy { ClosedForm, Quadrature, Fft };

constexpr std::string_view to_string(LineStrategy s) {
  switch (s) {
    case LineStrategy::ClosedForm: return "closed-form";
    case LineStrategy::Quadrature: return "quadrature";
    case LineStrategy::Fft: return "fft";
  }
  return "?";
}

/// How the Quadrature strategy integrates mu along a segment.
///
/// Auto picks composite midpoint with 4 panels per feature length for
/// sampled and Fourier media, and 16-node Gauss-Legendre per feature length
/// for analytic media. A nonzero `panels` fixes the panel count instead.
struct QuadratureSpec {
  enum class Rule { Auto, Midpoint, GaussLegendre };
  Rule rule = Rule::Auto;
  int panels = 0;
};

/// Kernel of the scattering operator in two dimensions,
///
///   K(x, y) = mu_s(y) E(x, y) / (2 pi |x - y|),   E(x, y) = exp(-int_x^y mu).
///
/// Stateless given an immutable medium, so every member is safe to call
/// concurrently.
class KernelEval {
 public:
  KernelEval(Medium medium, LineStrategy strategy, QuadratureSpec quad = {}, int dim = 2)
      : medium_(std::move(medium)), strategy_(strategy), quad_(quad), dim_(dim) {
    require(dim_ == 2, ErrorCode::DimensionMismatch, "only two-dimensional domains are supported");
    if (strategy_ == LineStrategy::ClosedForm)
      require(medium_.kind() == MediumKind::Homogeneous, ErrorCode::WrongMediumKind,
              "closed-form line integrals need a homogeneous medium");
    if (strategy_ == LineStrategy::Fft)
      require(medium_.kind() == MediumKind::FourierPeriodic, ErrorCode::WrongMediumKind,
              "FFT line integrals need a FourierPeriodic medium");
    if (quad_.rule != QuadratureSpec::Rule::Auto)
      require(quad_.panels >= 1, ErrorCode::ConfigError, "explicit quadrature rule needs panels >= 1");
  }

  /// Closed form for homogeneous media, FFT for Fourier media, quadrature otherwise.
  static KernelEval with_default_strategy(Medium medium) {
    LineStrategy s = LineStrategy::Quadrature;
    if (medium.kind() == MediumKind::Homogeneous) s = LineStrategy::ClosedForm;
    if (medium.kind() == MediumKind::FourierPeriodic) s = LineStrategy::Fft;
    return KernelEval(std::move(medium), s);
  }

  const Medium& medium() const { return medium_; }
  LineStrategy strategy() const { return strategy_; }
  int dim() const { return dim_; }

  /// True when K(x, y) depends only on x - y.
  bool translation_invariant() const { return medium_.kind() == MediumKind::Homogeneous; }

  double optical_depth(Point x, Point y) const {
    switch (strategy_) {
      case LineStrategy::ClosedForm: return medium_.mu(x) * distance(x, y);
      case LineStrategy::Fft: return line_integral_fft(medium_, x, y);
      case LineStrategy::Quadrature: break;
    }
    const double t = distance(x, y);
    if (t == 0.0) return 0.0;
    const int per_feature = std::max(1, static_cast<int>(std::ceil(t / medium_.feature_length())));
    switch (quad_.rule) {
      case QuadratureSpec::Rule::Midpoint: return line_integral_quadrature(medium_, x, y, quad_.panels);
      case QuadratureSpec::Rule::GaussLegendre: return line_integral_gauss(medium_, x, y, quad_.panels);
      case QuadratureSpec::Rule::Auto: break;
    }
    if (medium_.kind() == MediumKind::Analytic) return line_integral_gauss(medium_, x, y, per_feature);
    return line_integral_quadrature(medium_, x, y, 4 * per_feature);
  }

  /// E(x, y) in (0, 1]; exactly 1 when x == y.
  double attenuation(Point x, Point y) const {
    if (x == y) return 1.0;
    return std::exp(-optical_depth(x, y));
  }

  /// E(x, y) / (2 pi |x - y|): the part of the kernel symmetric in x and y.
  double transfer(Point x, Point y) const {
    const double r = distance(x, y);
    require(r > 0.0, ErrorCode::SingularPoint, "kernel is singular at x == y");
    return std::exp(-optical_depth(x, y)) / (kTwoPi * r);
  }

  double value(Point x, Point y) const { return medium_.mu_s(y) * transfer(x, y); }

 private:
  Medium medium_;
  LineStrategy strategy_;
  QuadratureSpec quad_;
  int dim_;
};

}  // namespace raysolve
