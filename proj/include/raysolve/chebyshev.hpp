#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "raysolve/error.hpp"
#include "raysolve/geometry.hpp"

namespace raysolve {

/// Tensor-product Chebyshev interpolation of order n on [-1, 1]^2.
///
/// Nodes are the roots of T_n, z_k = cos(pi (2k - 1) / (2n)), and the
/// interpolation functions are
///
///   S_n(x, y) = prod_axes ( 1/n + 2/n sum_{k=1}^{n-1} T_k(x_a) T_k(y_a) ).
///
/// Tensor node m = m1 + n * m2 is (z_{m1}, z_{m2}).
class ChebInterp {
 public:
  static constexpr int kMinOrder = 2;
  static constexpr int kMaxOrder = 16;

  explicit ChebInterp(int n) : n_(n) {
    require(n >= kMinOrder && n <= kMaxOrder, ErrorCode::OrderOutOfRange, "Chebyshev order must lie in [2, 16]");
    nodes_.resize(static_cast<std::size_t>(n));
    for (int k = 1; k <= n; ++k) nodes_[static_cast<std::size_t>(k - 1)] = std::cos(kPi * (2.0 * k - 1.0) / (2.0 * n));
    // T_k(z_j) = cos(k theta_j) with theta_j = pi (2j + 1) / (2n).
    t_at_nodes_.resize(static_cast<std::size_t>(n * n));
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        t_at_nodes_[static_cast<std::size_t>(j * n + k)] = std::cos(k * kPi * (2.0 * j + 1.0) / (2.0 * n));
  }

  int order() const { return n_; }
  std::size_t tensor_size() const { return static_cast<std::size_t>(n_ * n_); }
  const std::vector<double>& nodes() const { return nodes_; }

  Point tensor_node(std::size_t m) const {
    const auto n = static_cast<std::size_t>(n_);
    return {nodes_[m % n], nodes_[m / n]};
  }

  /// One-dimensional factor of S_n.
  double s1(double x, double y) const {
    double tx_prev = 1.0, tx = x;
    double ty_prev = 1.0, ty = y;
    double sum = 0.0;
    for (int k = 1; k < n_; ++k) {
      sum += tx * ty;
      const double tx_next = 2.0 * x * tx - tx_prev;
      const double ty_next = 2.0 * y * ty - ty_prev;
      tx_prev = tx;
      tx = tx_next;
      ty_prev = ty;
      ty = ty_next;
    }
    return (1.0 + 2.0 * sum) / n_;
  }

  double s(Point a, Point b) const { return s1(a.x, b.x) * s1(a.y, b.y); }

  /// out[k] = s1(z_k, x) for every 1-D node.
  void node_weights(double x, std::span<double> out) const {
    require(out.size() == nodes_.size(), ErrorCode::DimensionMismatch, "weight buffer has the wrong size");
    const auto n = static_cast<std::size_t>(n_);
    double tx[kMaxOrder];
    tx[0] = 1.0;
    tx[1] = x;
    for (std::size_t k = 2; k < n; ++k) tx[k] = 2.0 * x * tx[k - 1] - tx[k - 2];
    for (std::size_t j = 0; j < n; ++j) {
      const double* tz = t_at_nodes_.data() + j * n;
      double sum = 0.0;
      for (std::size_t k = 1; k < n; ++k) sum += tz[k] * tx[k];
      out[j] = (1.0 + 2.0 * sum) / n_;
    }
  }

  /// Interpolates values given at the tensor nodes to the point x.
  double interpolate(std::span<const double> node_values, Point x) const {
    require(node_values.size() == tensor_size(), ErrorCode::DimensionMismatch, "one value per tensor node expected");
    const auto n = static_cast<std::size_t>(n_);
    std::vector<double> wx(n), wy(n);
    node_weights(x.x, wx);
    node_weights(x.y, wy);
    double acc = 0.0;
    for (std::size_t m2 = 0; m2 < n; ++m2) {
      double row = 0.0;
      for (std::size_t m1 = 0; m1 < n; ++m1) row += wx[m1] * node_values[m1 + n * m2];
      acc += wy[m2] * row;
    }
    return acc;
  }

 private:
  int n_;
  std::vector<double> nodes_;
  std::vector<double> t_at_nodes_;
};

}  // namespace raysolve
