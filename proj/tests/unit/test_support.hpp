#pragma once

#include <complex>
#include <random>
#include <vector>

#include "raysolve/raysolve.hpp"

namespace raysolve::testing {

/// mu(x) = 3 + 2 cos(2 pi x1), split as mu_a = 1 + 0.8 cos and mu_s = 2 + 1.2 cos.
inline Medium cosine_medium() {
  using C = std::complex<double>;
  const auto series = [](double mean, double amplitude) {
    std::vector<C> c(9, C(0.0, 0.0));
    c[4] = mean;               // (0, 0)
    c[3] = 0.5 * amplitude;    // (-1, 0)
    c[5] = 0.5 * amplitude;    // (1, 0)
    return FourierSeries(2, c);
  };
  return Medium::fourier_periodic(series(1.0, 0.8), series(2.0, 1.2));
}

/// The inhomogeneous experiment medium truncated to Q = 16 Fourier modes.
inline Medium fourier_bump_medium() {
  RunConfig c;
  c.medium.preset = "gaussian-bump";
  c.fmm.line_strategy = "fft";
  return make_medium(c);
}

inline Medium analytic_bump_medium() {
  RunConfig c;
  c.medium.preset = "gaussian-bump";
  return make_medium(c);
}

inline ScalarField random_field(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ScalarField f(n);
  for (auto& v : f) v = u(rng);
  return f;
}

inline Point random_point(std::mt19937& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return {u(rng), u(rng)};
}

}  // namespace raysolve::testing
