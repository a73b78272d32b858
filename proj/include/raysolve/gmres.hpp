#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "raysolve/error.hpp"

namespace raysolve {

struct GmresConfig {
  double rel_tol = 1e-10;
  int max_iter = 200;
  /// Krylov basis size before restarting; 0 keeps the full basis.
  int restart = 0;

  void validate() const {
    require(rel_tol > 0.0 && rel_tol < 1.0, ErrorCode::ConfigError, "rel_tol must lie in (0, 1)");
    require(max_iter >= 1, ErrorCode::ConfigError, "max_iter must be at least 1");
    require(restart >= 0, ErrorCode::ConfigError, "restart must be nonnegative");
  }
};

struct GmresResult {
  std::vector<double> x;
  int iterations = 0;
  std::size_t matvecs = 0;
  /// ||b - A x|| / ||b|| recomputed with an explicit matvec at the end.
  double relative_residual = 0.0;
  bool converged = false;
};

namespace detail {

inline double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double a : v) s += a * a;
  return std::sqrt(s);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

/// Restarted GMRES with modified Gram-Schmidt and Givens rotations, starting
/// from x = 0. `apply(in, out)` writes A * in into out.
template <class Apply>
GmresResult gmres(Apply&& apply, std::span<const double> b, const GmresConfig& cfg) {
  cfg.validate();
  const std::size_t n = b.size();
  GmresResult res;
  res.x.assign(n, 0.0);
  const double bnorm = detail::norm2(b);
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }
  const double target = cfg.rel_tol * bnorm;
  const int m = cfg.restart == 0 ? cfg.max_iter : std::min(cfg.restart, cfg.max_iter);

  std::vector<double> r(b.begin(), b.end());
  std::vector<double> ax(n);
  double rnorm = bnorm;
  std::vector<std::vector<double>> v;
  std::vector<double> h(static_cast<std::size_t>((m + 1) * m));
  std::vector<double> cs(static_cast<std::size_t>(m)), sn(static_cast<std::size_t>(m));
  std::vector<double> g(static_cast<std::size_t>(m + 1));
  const auto H = [&h, m](int i, int j) -> double& { return h[static_cast<std::size_t>(i * m + j)]; };

  while (true) {
    v.assign(1, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) v[0][i] = r[i] / rnorm;
    std::fill(g.begin(), g.end(), 0.0);
    g[0] = rnorm;
    int k = 0;
    double est = rnorm;
    for (; k < m && res.iterations < cfg.max_iter; ++k) {
      std::vector<double> w(n);
      apply(std::span<const double>(v[static_cast<std::size_t>(k)]), std::span<double>(w));
      ++res.matvecs;
      ++res.iterations;
      for (int i = 0; i <= k; ++i) {
        const double hij = detail::dot(w, v[static_cast<std::size_t>(i)]);
        H(i, k) = hij;
        const auto& vi = v[static_cast<std::size_t>(i)];
        for (std::size_t t = 0; t < n; ++t) w[t] -= hij * vi[t];
      }
      const double wn = detail::norm2(w);
      H(k + 1, k) = wn;
      for (int i = 0; i < k; ++i) {
        const double a = H(i, k), c = H(i + 1, k);
        H(i, k) = cs[static_cast<std::size_t>(i)] * a + sn[static_cast<std::size_t>(i)] * c;
        H(i + 1, k) = -sn[static_cast<std::size_t>(i)] * a + cs[static_cast<std::size_t>(i)] * c;
      }
      const double a = H(k, k), c = H(k + 1, k);
      const double rho = std::hypot(a, c);
      cs[static_cast<std::size_t>(k)] = rho == 0.0 ? 1.0 : a / rho;
      sn[static_cast<std::size_t>(k)] = rho == 0.0 ? 0.0 : c / rho;
      H(k, k) = rho;
      H(k + 1, k) = 0.0;
      g[static_cast<std::size_t>(k + 1)] = -sn[static_cast<std::size_t>(k)] * g[static_cast<std::size_t>(k)];
      g[static_cast<std::size_t>(k)] *= cs[static_cast<std::size_t>(k)];
      est = std::abs(g[static_cast<std::size_t>(k + 1)]);
      if (est <= target || wn == 0.0) {
        ++k;
        break;
      }
      v.emplace_back(n);
      for (std::size_t t = 0; t < n; ++t) v.back()[t] = w[t] / wn;
    }

    // Back substitution for the k leading coefficients.
    std::vector<double> y(static_cast<std::size_t>(k));
    for (int i = k - 1; i >= 0; --i) {
      double s = g[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < k; ++j) s -= H(i, j) * y[static_cast<std::size_t>(j)];
      y[static_cast<std::size_t>(i)] = H(i, i) == 0.0 ? 0.0 : s / H(i, i);
    }
    for (int j = 0; j < k; ++j) {
      const auto& vj = v[static_cast<std::size_t>(j)];
      for (std::size_t t = 0; t < n; ++t) res.x[t] += y[static_cast<std::size_t>(j)] * vj[t];
    }

    apply(std::span<const double>(res.x), std::span<double>(ax));
    ++res.matvecs;
    for (std::size_t t = 0; t < n; ++t) r[t] = b[t] - ax[t];
    rnorm = detail::norm2(r);
    res.relative_residual = rnorm / bnorm;
    if (rnorm <= target) {
      res.converged = true;
      return res;
    }
    if (res.iterations >= cfg.max_iter) return res;
  }
}

}  // namespace raysolve
