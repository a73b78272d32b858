#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "raysolve/discretization.hpp"
#include "raysolve/error.hpp"
#include "raysolve/geometry.hpp"
#include "raysolve/kernel.hpp"
#include "raysolve/sampled_field.hpp"

namespace raysolve {

/// Equal-weight directions on the unit circle, theta_k = 2 pi (k + 1/2) / n.
class OrdinateSet {
 public:
  explicit OrdinateSet(std::size_t n_dirs) : n_(n_dirs) {
    require(n_dirs >= 4, ErrorCode::ConfigError, "at least four ordinates are required");
    dirs_.reserve(n_);
    for (std::size_t k = 0; k < n_; ++k) {
      const double theta = theta_of(k);
      dirs_.push_back({std::cos(theta), std::sin(theta)});
    }
  }

  std::size_t size() const { return n_; }
  double theta_of(std::size_t k) const { return kTwoPi * (static_cast<double>(k) + 0.5) / static_cast<double>(n_); }
  Point direction(std::size_t k) const { return dirs_[k]; }
  double weight() const { return kTwoPi / static_cast<double>(n_); }

 private:
  std::size_t n_;
  std::vector<Point> dirs_;
};

/// Phi(x_i, v_k) stored node-major: value(i, k) = values[i * dirs + k].
struct AngularField {
  std::size_t nodes = 0;
  std::size_t dirs = 0;
  std::vector<double> values;

  double& at(std::size_t i, std::size_t k) { return values[i * dirs + k]; }
  double at(std::size_t i, std::size_t k) const { return values[i * dirs + k]; }
};

/// Distance from x to the boundary of the unit square going backwards
/// along v, i.e. the largest tau with x - l v inside for all l in [0, tau].
inline double backward_exit_distance(Point x, Point v) {
  double tau = std::numeric_limits<double>::infinity();
  if (v.x > 0.0) tau = std::min(tau, x.x / v.x);
  if (v.x < 0.0) tau = std::min(tau, (1.0 - x.x) / -v.x);
  if (v.y > 0.0) tau = std::min(tau, x.y / v.y);
  if (v.y < 0.0) tau = std::min(tau, (1.0 - x.y) / -v.y);
  return std::max(tau, 0.0);
}

/// Phi(x, v) = int_0^tau exp(-int_0^l mu(x - s v) ds) Q(x - l v) dl at one
/// point, by the composite midpoint rule with `m_per_cell` samples per cell
/// width. Q is any callable Point -> double.
template <class Source>
double characteristic_integral(const KernelEval& k, Point x, Point v, const Source& q, double h, int m_per_cell) {
  const double tau = backward_exit_distance(x, v);
  if (tau == 0.0) return 0.0;
  const auto samples = static_cast<std::size_t>(std::max(1.0, std::ceil(tau / h * m_per_cell)));
  const double dl = tau / static_cast<double>(samples);
  const Medium& m = k.medium();
  const bool closed_form = k.strategy() == LineStrategy::ClosedForm;
  const double mu0 = closed_form ? m.mu(x) : 0.0;
  double depth = 0.0;  // optical depth from x to the start of the current panel
  double sum = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const double l = (static_cast<double>(s) + 0.5) * dl;
    const Point p = x - l * v;
    double depth_mid;
    if (closed_form) {
      depth_mid = mu0 * l;
    } else {
      // Half-panel midpoint increments keep the depth second-order accurate.
      depth_mid = depth + 0.5 * dl * m.mu(x - (l - 0.25 * dl) * v);
      depth = depth_mid + 0.5 * dl * m.mu(x - (l + 0.25 * dl) * v);
    }
    sum += std::exp(-depth_mid) * q(p);
  }
  return sum * dl;
}

/// Scattering-free transport sweep: Phi for every grid node and ordinate,
/// with zero inflow and Q interpolated bilinearly from its node values.
inline AngularField sweep(const Grid2D& grid, const KernelEval& k, std::span<const double> Q, const OrdinateSet& ords,
                          int m_per_cell = 4) {
  require(Q.size() == grid.size(), ErrorCode::DimensionMismatch, "source size does not match the grid");
  require(m_per_cell >= 1, ErrorCode::ConfigError, "m_per_cell must be at least 1");
  const SampledField qf(grid.nx, grid.nx, std::vector<double>(Q.begin(), Q.end()));
  AngularField phi{grid.size(), ords.size(), std::vector<double>(grid.size() * ords.size(), 0.0)};
#pragma omp parallel for schedule(dynamic, 8)
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (std::size_t d = 0; d < ords.size(); ++d)
      phi.at(i, d) = characteristic_integral(k, grid.nodes[i], ords.direction(d), qf, grid.h, m_per_cell);
  return phi;
}

/// sum_k w_k Phi(x_i, v_k), the discrete integral over the unit circle.
inline ScalarField angular_average(const AngularField& phi, const OrdinateSet& ords) {
  require(phi.dirs == ords.size(), ErrorCode::DimensionMismatch, "field and ordinate set disagree on direction count");
  require(phi.values.size() == phi.nodes * phi.dirs, ErrorCode::DimensionMismatch, "angular field is malformed");
  ScalarField out(phi.nodes, 0.0);
  for (std::size_t i = 0; i < phi.nodes; ++i) {
    double s = 0.0;
    for (std::size_t d = 0; d < phi.dirs; ++d) s += phi.at(i, d);
    out[i] = s * ords.weight();
  }
  return out;
}

/// Transport source whose sweep integrates back to U over the circle:
/// (mu_s U + f) / (2 pi), matching the 1 / (2 pi) in the kernel.
inline ScalarField recovery_source(const Grid2D& grid, const Medium& medium, std::span<const double> U,
                                   std::span<const double> f) {
  require(U.size() == grid.size() && f.size() == grid.size(), ErrorCode::DimensionMismatch,
          "field size does not match the grid");
  ScalarField q(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) q[i] = (medium.mu_s(grid.nodes[i]) * U[i] + f[i]) / kTwoPi;
  return q;
}

}  // namespace raysolve
