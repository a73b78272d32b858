#pragma once

#include <boost/math/quadrature/gauss.hpp>

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "raysolve/error.hpp"
#include "raysolve/geometry.hpp"
#include "raysolve/kernel.hpp"

namespace raysolve {

/// Uniform cell-centred grid on the unit square.
///
/// Node i = q * nx + p sits at ((p + 1/2) h, (q + 1/2) h) and carries the
/// midpoint weight h^2.
struct Grid2D {
  std::size_t nx = 0;
  double h = 0.0;
  std::vector<Point> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
};

inline Grid2D build_grid(std::size_t nx) {
  require(nx >= 2 && nx <= 4096, ErrorCode::InvalidResolution, "cells per axis must lie in [2, 4096]");
  Grid2D g;
  g.nx = nx;
  g.h = 1.0 / static_cast<double>(nx);
  g.nodes.reserve(nx * nx);
  for (std::size_t q = 0; q < nx; ++q)
    for (std::size_t p = 0; p < nx; ++p)
      g.nodes.push_back({(static_cast<double>(p) + 0.5) * g.h, (static_cast<double>(q) + 0.5) * g.h});
  g.weights.assign(nx * nx, g.h * g.h);
  return g;
}

/// Replacement for the singular term w_i K(x_i, x_i) U_i of the Nystrom sum.
struct SelfContribution {
  std::vector<double> diag;
};

namespace detail {

/// Integral of exp(-mu r) / r over a square of half-width a centred at the
/// origin, in polar coordinates: the radial part is exact and the angular
/// part uses 64-point Gauss-Legendre on one of the eight symmetric wedges.
inline double polar_cell_integral(double mu, double a) {
  using Rule = boost::math::quadrature::gauss<double, 64>;
  const auto radial = [mu, a](double theta) {
    const double r = a / std::cos(theta);
    return mu == 0.0 ? r : -std::expm1(-mu * r) / mu;
  };
  return 8.0 * Rule::integrate(radial, 0.0, kPi / 4.0);
}

}  // namespace detail

/// sigma_i = mu_s(x_i) / (2 pi) * int_{cell_i} exp(-mu(x_i) r) / r dA, with
/// the coefficients frozen at the cell centre.
inline SelfContribution self_contribution(const Grid2D& grid, const KernelEval& k) {
  const Medium& m = k.medium();
  SelfContribution sc;
  sc.diag.resize(grid.size());
  std::map<std::pair<double, double>, double> memo;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double mu_s = m.mu_s(grid.nodes[i]);
    if (mu_s == 0.0) {
      sc.diag[i] = 0.0;
      continue;
    }
    const double mu = m.mu(grid.nodes[i]);
    auto [it, fresh] = memo.try_emplace({mu, mu_s}, 0.0);
    if (fresh) it->second = mu_s / kTwoPi * detail::polar_cell_integral(mu, 0.5 * grid.h);
    sc.diag[i] = it->second;
  }
  return sc;
}

/// (KU)_i = sigma_i U_i + sum_{j != i} w_j K(x_i, x_j) U_j by plain O(N^2)
/// summation with every kernel value evaluated on the spot.
inline ScalarField apply_K_direct(const Grid2D& grid, const KernelEval& k, const SelfContribution& sc,
                                  std::span<const double> u) {
  const std::size_t n = grid.size();
  require(u.size() == n && sc.diag.size() == n, ErrorCode::DimensionMismatch, "field size does not match the grid");
  ScalarField out(n, 0.0);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::size_t i = 0; i < n; ++i) {
    double acc = sc.diag[i] * u[i];
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) acc += grid.weights[j] * k.value(grid.nodes[i], grid.nodes[j]) * u[j];
    out[i] = acc;
  }
  return out;
}

/// Linear map U -> KU on a grid; implemented by the direct and FMM backends.
class IntegralOperator {
 public:
  virtual ~IntegralOperator() = default;
  virtual std::size_t size() const = 0;
  virtual void apply(std::span<const double> u, std::span<double> out) const = 0;

  ScalarField apply(std::span<const double> u) const {
    ScalarField out(size());
    apply(u, out);
    return out;
  }
};

/// Direct-summation K with kernel values computed once and reused.
///
/// Homogeneous media store one value per grid offset (2 nx - 1)^2; other
/// media store the symmetric transfer E / (2 pi r) for every node pair i < j
/// when it fits in `cache_budget_bytes`, and evaluate on the fly otherwise.
class DirectOperator final : public IntegralOperator {
 public:
  static constexpr std::size_t kDefaultBudget = std::size_t{1} << 31;

  DirectOperator(const Grid2D& grid, const KernelEval& k, SelfContribution sc,
                 std::size_t cache_budget_bytes = kDefaultBudget)
      : grid_(grid), kernel_(k), sc_(std::move(sc)) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t n = grid_.size();
    require(sc_.diag.size() == n, ErrorCode::DimensionMismatch, "self contribution does not match the grid");
    source_scale_.resize(n);
    for (std::size_t j = 0; j < n; ++j) source_scale_[j] = grid_.weights[j] * kernel_.medium().mu_s(grid_.nodes[j]);

    if (kernel_.translation_invariant()) {
      mode_ = Mode::OffsetTable;
      const std::size_t nx = grid_.nx;
      const std::size_t w = 2 * nx - 1;
      offsets_.assign(w * w, 0.0);
      for (std::size_t b = 0; b < w; ++b)
        for (std::size_t a = 0; a < w; ++a) {
          const double dp = static_cast<double>(a) - static_cast<double>(nx - 1);
          const double dq = static_cast<double>(b) - static_cast<double>(nx - 1);
          if (dp == 0.0 && dq == 0.0) continue;
          offsets_[b * w + a] = kernel_.transfer(grid_.nodes[0], grid_.nodes[0] + Point{dp * grid_.h, dq * grid_.h});
          ++kernel_evals_;
        }
    } else if (n * (n - 1) / 2 * sizeof(double) <= cache_budget_bytes) {
      mode_ = Mode::PairCache;
      pairs_.resize(n * (n - 1) / 2);
#pragma omp parallel for schedule(dynamic, 16)
      for (std::size_t i = 0; i < n; ++i) {
        double* row = pairs_.data() + row_offset(i);
        for (std::size_t j = i + 1; j < n; ++j) row[j - i - 1] = kernel_.transfer(grid_.nodes[i], grid_.nodes[j]);
      }
      kernel_evals_ = pairs_.size();
    } else {
      mode_ = Mode::OnTheFly;
    }
    setup_seconds_ = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  std::size_t size() const override { return grid_.size(); }
  using IntegralOperator::apply;

  void apply(std::span<const double> u, std::span<double> out) const override {
    const std::size_t n = grid_.size();
    require(u.size() == n && out.size() == n, ErrorCode::DimensionMismatch, "field size does not match the grid");
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> w(n);
    for (std::size_t j = 0; j < n; ++j) w[j] = source_scale_[j] * u[j];
    switch (mode_) {
      case Mode::OffsetTable: apply_offsets(w, out); break;
      case Mode::PairCache: apply_pairs(w, out); break;
      case Mode::OnTheFly: apply_on_the_fly(w, out); break;
    }
    for (std::size_t i = 0; i < n; ++i) out[i] += sc_.diag[i] * u[i];
    last_apply_seconds_ = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ++applies_;
  }

  double setup_seconds() const { return setup_seconds_; }
  double last_apply_seconds() const { return last_apply_seconds_; }
  std::size_t applies() const { return applies_; }
  std::uint64_t kernel_evals() const { return kernel_evals_; }

 private:
  enum class Mode { OffsetTable, PairCache, OnTheFly };

  std::size_t row_offset(std::size_t i) const {
    const std::size_t n = grid_.size();
    return i * n - i * (i + 1) / 2;
  }

  void apply_offsets(const std::vector<double>& w, std::span<double> out) const {
    const std::size_t nx = grid_.nx;
    const std::size_t width = 2 * nx - 1;
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < nx * nx; ++i) {
      const std::size_t p = i % nx;
      const std::size_t q = i / nx;
      double acc = 0.0;
      for (std::size_t qs = 0; qs < nx; ++qs) {
        const double* table = offsets_.data() + (qs + nx - 1 - q) * width + (nx - 1 - p);
        const double* src = w.data() + qs * nx;
        for (std::size_t ps = 0; ps < nx; ++ps) acc += table[ps] * src[ps];
      }
      out[i] = acc;
    }
  }

  void apply_pairs(const std::vector<double>& w, std::span<double> out) const {
    const std::size_t n = grid_.size();
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = pairs_.data() + row_offset(i);
      const double wi = w[i];
      double acc = 0.0;
      for (std::size_t j = i + 1; j < n; ++j) {
        acc += row[j - i - 1] * w[j];
        out[j] += row[j - i - 1] * wi;
      }
      out[i] += acc;
    }
  }

  void apply_on_the_fly(const std::vector<double>& w, std::span<double> out) const {
    const std::size_t n = grid_.size();
#pragma omp parallel for schedule(dynamic, 16)
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) acc += kernel_.transfer(grid_.nodes[i], grid_.nodes[j]) * w[j];
      out[i] = acc;
    }
    kernel_evals_ += n * (n - 1);
  }

  Grid2D grid_;
  KernelEval kernel_;
  SelfContribution sc_;
  Mode mode_ = Mode::OnTheFly;
  std::vector<double> source_scale_;
  std::vector<double> offsets_;
  std::vector<double> pairs_;
  double setup_seconds_ = 0.0;
  mutable double last_apply_seconds_ = 0.0;
  mutable std::size_t applies_ = 0;
  mutable std::uint64_t kernel_evals_ = 0;
};

}  // namespace raysolve
