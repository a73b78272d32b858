#pragma once

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <string>
#include <utility>

#include "raysolve/error.hpp"
#include "raysolve/fourier.hpp"
#include "raysolve/geometry.hpp"
#include "raysolve/sampled_field.hpp"

namespace raysolve {

enum class MediumKind { Homogeneous, GridSampled, FourierPeriodic, Analytic };

/// Absorption and scattering coefficients on the unit square.
///
/// mu = mu_a + mu_s is always derived, never stored. Construction rejects
/// media with mu_a <= 0 or mu_s < 0 anywhere on a check grid, since the
/// integral equation is only uniquely solvable when mu_a > 0.
class Medium {
 public:
  using Function = std::function<double(Point)>;

  static Medium homogeneous(double mu_a, double mu_s) {
    Medium m(MediumKind::Homogeneous);
    m.mu_a0_ = mu_a;
    m.mu_s0_ = mu_s;
    m.validate();
    return m;
  }

  static Medium grid_sampled(SampledField mu_a, SampledField mu_s) {
    Medium m(MediumKind::GridSampled);
    m.grid_a_ = std::move(mu_a);
    m.grid_s_ = std::move(mu_s);
    m.validate();
    return m;
  }

  static Medium fourier_periodic(FourierSeries mu_a, FourierSeries mu_s) {
    Medium m(MediumKind::FourierPeriodic);
    m.fourier_total_ = mu_a + mu_s;
    m.fourier_a_ = std::move(mu_a);
    m.fourier_s_ = std::move(mu_s);
    m.validate();
    return m;
  }

  /// Coefficients given as closed-form functions. `feature_length` is the
  /// length scale over which they vary; it sets the default quadrature panel
  /// size. `tag` identifies the medium in cache keys.
  static Medium analytic(Function mu_a, Function mu_s, std::string tag, double feature_length = 0.5) {
    Medium m(MediumKind::Analytic);
    m.fn_a_ = std::move(mu_a);
    m.fn_s_ = std::move(mu_s);
    m.tag_ = std::move(tag);
    m.feature_ = feature_length;
    m.validate();
    return m;
  }

  MediumKind kind() const { return kind_; }

  double mu_a(Point p) const {
    switch (kind_) {
      case MediumKind::Homogeneous: return mu_a0_;
      case MediumKind::GridSampled: return grid_a_(p);
      case MediumKind::FourierPeriodic: return fourier_a_(p);
      case MediumKind::Analytic: return fn_a_(p);
    }
    return 0.0;
  }

  double mu_s(Point p) const {
    switch (kind_) {
      case MediumKind::Homogeneous: return mu_s0_;
      case MediumKind::GridSampled: return grid_s_(p);
      case MediumKind::FourierPeriodic: return fourier_s_(p);
      case MediumKind::Analytic: return fn_s_(p);
    }
    return 0.0;
  }

  double mu(Point p) const {
    switch (kind_) {
      case MediumKind::Homogeneous: return mu_a0_ + mu_s0_;
      case MediumKind::FourierPeriodic: return fourier_total_(p);
      default: return mu_a(p) + mu_s(p);
    }
  }

  /// Fourier coefficients of the total attenuation mu.
  const FourierSeries& fourier_total() const {
    require(kind_ == MediumKind::FourierPeriodic, ErrorCode::WrongMediumKind, "medium is not FourierPeriodic");
    return fourier_total_;
  }

  /// Length over which the coefficients vary appreciably.
  double feature_length() const {
    switch (kind_) {
      case MediumKind::Homogeneous: return 1.0;
      case MediumKind::GridSampled: return std::min(grid_a_.spacing(), grid_s_.spacing());
      case MediumKind::FourierPeriodic: return 1.0 / (2.0 * fourier_total_.order());
      case MediumKind::Analytic: return feature_;
    }
    return 1.0;
  }

  /// Stable 64-bit digest of the medium's parameters, for cache keys.
  std::uint64_t fingerprint() const {
    Fnv1a h;
    h.add(static_cast<int>(kind_));
    switch (kind_) {
      case MediumKind::Homogeneous:
        h.add(mu_a0_);
        h.add(mu_s0_);
        break;
      case MediumKind::GridSampled:
        for (const auto* g : {&grid_a_, &grid_s_}) {
          h.add(g->nx());
          h.add(g->ny());
          for (double v : g->values()) h.add(v);
        }
        break;
      case MediumKind::FourierPeriodic:
        for (const auto* s : {&fourier_a_, &fourier_s_}) {
          h.add(s->order());
          for (const auto& c : s->coefficients()) {
            h.add(c.real());
            h.add(c.imag());
          }
        }
        break;
      case MediumKind::Analytic:
        for (char c : tag_) h.add(c);
        h.add(feature_);
        break;
    }
    return h.value;
  }

 private:
  struct Fnv1a {
    std::uint64_t value = 1469598103934665603ULL;
    template <class T>
    void add(const T& v) {
      unsigned char bytes[sizeof(T)];
      std::memcpy(bytes, &v, sizeof(T));
      for (unsigned char b : bytes) {
        value ^= b;
        value *= 1099511628211ULL;
      }
    }
  };

  explicit Medium(MediumKind kind) : kind_(kind) {}

  void validate() const {
    if (kind_ == MediumKind::Homogeneous) {
      require(std::isfinite(mu_a0_) && std::isfinite(mu_s0_), ErrorCode::InvalidMedium, "coefficients must be finite");
      require(mu_a0_ > 0.0, ErrorCode::InvalidMedium, "mu_a must be positive");
      require(mu_s0_ >= 0.0, ErrorCode::InvalidMedium, "mu_s must be nonnegative");
      return;
    }
    constexpr int kCheck = 64;
    for (int j = 0; j < kCheck; ++j)
      for (int i = 0; i < kCheck; ++i) {
        const Point p{(i + 0.5) / kCheck, (j + 0.5) / kCheck};
        const double a = mu_a(p);
        const double s = mu_s(p);
        require(std::isfinite(a) && std::isfinite(s), ErrorCode::InvalidMedium, "coefficients must be finite");
        require(a > 0.0, ErrorCode::InvalidMedium, "mu_a must be positive everywhere");
        require(s >= 0.0, ErrorCode::InvalidMedium, "mu_s must be nonnegative everywhere");
      }
    if (kind_ == MediumKind::GridSampled) {
      require(grid_a_.min() > 0.0, ErrorCode::InvalidMedium, "mu_a samples must be positive");
      require(grid_s_.min() >= 0.0, ErrorCode::InvalidMedium, "mu_s samples must be nonnegative");
    }
  }

  MediumKind kind_;
  double mu_a0_ = 0.0;
  double mu_s0_ = 0.0;
  SampledField grid_a_, grid_s_;
  FourierSeries fourier_a_, fourier_s_, fourier_total_;
  Function fn_a_, fn_s_;
  std::string tag_;
  double feature_ = 0.5;
};

/// Fourier-periodic medium from cell-centred samples of mu_a and mu_s,
/// each truncated to |n| < Q per axis.
inline Medium build_fourier_medium(const SampledField& mu_a, const SampledField& mu_s, int q) {
  return Medium::fourier_periodic(fourier_series(mu_a, q), fourier_series(mu_s, q));
}

/// Composite midpoint approximation of the integral of mu along [x, y].
inline double line_integral_quadrature(const Medium& medium, Point x, Point y, int panels) {
  require(panels >= 1, ErrorCode::ConfigError, "quadrature needs at least one panel");
  const Point d = y - x;
  const double t = norm(d);
  if (t == 0.0) return 0.0;
  double sum = 0.0;
  for (int k = 0; k < panels; ++k) {
    const double s = (k + 0.5) / panels;
    sum += medium.mu(x + s * d);
  }
  return sum * (t / panels);
}

/// Composite Gauss-Legendre (16 nodes per panel) integral of mu along [x, y].
inline double line_integral_gauss(const Medium& medium, Point x, Point y, int panels) {
  require(panels >= 1, ErrorCode::ConfigError, "quadrature needs at least one panel");
  using Rule = boost::math::quadrature::gauss<double, 16>;
  const Point d = y - x;
  const double t = norm(d);
  if (t == 0.0) return 0.0;
  const auto mu_at = [&](double s) { return medium.mu(x + s * d); };
  double sum = 0.0;
  for (int k = 0; k < panels; ++k)
    sum += Rule::integrate(mu_at, static_cast<double>(k) / panels, static_cast<double>(k + 1) / panels);
  return sum * t;
}

/// Exact line integral of a FourierPeriodic medium's truncated series.
inline double line_integral_fft(const Medium& medium, Point x, Point y) {
  require(medium.kind() == MediumKind::FourierPeriodic, ErrorCode::WrongMediumKind,
          "FFT line integrals need a FourierPeriodic medium");
  if (x == y) return 0.0;
  return medium.fourier_total().line_integral(x, y);
}

}  // namespace raysolve
