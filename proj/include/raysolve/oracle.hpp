#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <span>

#include "raysolve/discretization.hpp"
#include "raysolve/error.hpp"
#include "raysolve/geometry.hpp"
#include "raysolve/kernel.hpp"

namespace raysolve {

/// Explicit matrix A = I - K of the discrete system.
struct DenseSystem {
  Eigen::MatrixXd A;
};

inline constexpr std::size_t kDenseLimit = 16384;

inline DenseSystem assemble_dense(const Grid2D& grid, const KernelEval& k, const SelfContribution& sc) {
  const std::size_t n = grid.size();
  require(n <= kDenseLimit, ErrorCode::TooLarge, "dense assembly is limited to 16384 unknowns");
  require(sc.diag.size() == n, ErrorCode::DimensionMismatch, "self contribution does not match the grid");
  DenseSystem sys;
  sys.A.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const auto idx = [](std::size_t i) { return static_cast<Eigen::Index>(i); };
#pragma omp parallel for schedule(dynamic, 16)
  for (std::size_t j = 0; j < n; ++j) {
    const double scale = grid.weights[j] * k.medium().mu_s(grid.nodes[j]);
    for (std::size_t i = 0; i < n; ++i)
      sys.A(idx(i), idx(j)) = i == j ? 1.0 - sc.diag[i] : -scale * k.transfer(grid.nodes[i], grid.nodes[j]);
  }
  return sys;
}

/// Solves A U = phi by partial-pivot LU and checks the residual.
inline ScalarField solve_dense(const DenseSystem& sys, std::span<const double> phi) {
  const auto n = sys.A.rows();
  require(static_cast<Eigen::Index>(phi.size()) == n, ErrorCode::DimensionMismatch,
          "right-hand side size does not match the matrix");
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(sys.A);
  const double rcond = lu.rcond();
  require(std::isfinite(rcond) && rcond > 1e-14, ErrorCode::SingularMatrix, "matrix is numerically singular");
  const Eigen::Map<const Eigen::VectorXd> b(phi.data(), n);
  const Eigen::VectorXd u = lu.solve(b);
  const double bn = b.norm();
  require(bn == 0.0 || (sys.A * u - b).norm() <= 1e-12 * bn, ErrorCode::SingularMatrix,
          "dense solve residual exceeds 1e-12");
  return ScalarField(u.data(), u.data() + n);
}

}  // namespace raysolve
