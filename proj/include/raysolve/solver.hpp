#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "raysolve/discretization.hpp"
#include "raysolve/error.hpp"
#include "raysolve/geometry.hpp"
#include "raysolve/gmres.hpp"
#include "raysolve/medium.hpp"

namespace raysolve {

enum class Backend { Direct, Fmm };

constexpr std::string_view to_string(Backend b) { return b == Backend::Direct ? "direct" : "fmm"; }

struct SolveReport {
  int iterations = 0;
  double final_relative_residual = 0.0;
  std::size_t matvec_count = 0;
  double wall_seconds_setup = 0.0;
  double wall_seconds_solve = 0.0;
  Backend backend = Backend::Direct;
  /// Chebyshev order of the FMM backend; 0 for direct summation.
  int order = 0;
  std::size_t unknowns = 0;

  nlohmann::json to_json() const {
    return {{"backend", std::string(to_string(backend))},
            {"n", order},
            {"N", unknowns},
            {"iterations", iterations},
            {"residual", final_relative_residual},
            {"setup_s", wall_seconds_setup},
            {"solve_s", wall_seconds_solve},
            {"matvecs", matvec_count}};
  }
};

struct SolveResult {
  ScalarField U;
  SolveReport report;
};

/// Raised when GMRES exhausts its iteration budget; keeps the last iterate.
class NoConvergenceError : public Error {
 public:
  NoConvergenceError(SolveResult partial, const std::string& what)
      : Error(ErrorCode::NoConvergence, what), partial_(std::move(partial)) {}

  const SolveResult& partial() const { return partial_; }

 private:
  SolveResult partial_;
};

/// phi = K (f / mu_s), evaluated with the given matvec backend.
inline ScalarField compute_phi(const IntegralOperator& K, const Grid2D& grid, const Medium& medium,
                               std::span<const double> f) {
  require(f.size() == grid.size() && K.size() == grid.size(), ErrorCode::DimensionMismatch,
          "source size does not match the grid");
  ScalarField g(grid.size(), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (f[i] == 0.0) continue;
    const double mu_s = medium.mu_s(grid.nodes[i]);
    require(mu_s > 0.0, ErrorCode::ZeroScatteringWithSource, "source is nonzero where mu_s vanishes");
    g[i] = f[i] / mu_s;
  }
  return K.apply(g);
}

/// Solves (I - K) U = phi by matrix-free GMRES.
inline SolveResult solve_U(const IntegralOperator& K, std::span<const double> phi, const GmresConfig& cfg,
                           SolveReport report = {}) {
  require(phi.size() == K.size(), ErrorCode::DimensionMismatch, "right-hand side size does not match the operator");
  const auto t0 = std::chrono::steady_clock::now();
  const auto apply = [&K](std::span<const double> in, std::span<double> out) {
    K.apply(in, out);
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] - out[i];
  };
  GmresResult g = gmres(apply, phi, cfg);
  report.iterations = g.iterations;
  report.final_relative_residual = g.relative_residual;
  report.matvec_count = g.matvecs;
  report.unknowns = phi.size();
  report.wall_seconds_solve = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  SolveResult out{std::move(g.x), report};
  if (!g.converged)
    throw NoConvergenceError(std::move(out), "GMRES stopped after " + std::to_string(report.iterations) +
                                                 " iterations at relative residual " +
                                                 std::to_string(report.final_relative_residual));
  return out;
}

/// ||K||_inf for a nonnegative kernel: the largest entry of K applied to ones.
inline double operator_norm_inf(const IntegralOperator& K) {
  const ScalarField row_sums = K.apply(ScalarField(K.size(), 1.0));
  double m = 0.0;
  for (double v : row_sums) m = std::max(m, std::abs(v));
  return m;
}

/// Truncated Neumann series sum_{p <= terms} K^p phi.
inline ScalarField neumann_reference(const IntegralOperator& K, std::span<const double> phi, int terms) {
  require(phi.size() == K.size(), ErrorCode::DimensionMismatch, "right-hand side size does not match the operator");
  require(terms >= 0, ErrorCode::ConfigError, "term count must be nonnegative");
  ScalarField sum(phi.begin(), phi.end());
  if (terms == 0) return sum;
  const double norm = operator_norm_inf(K);
  require(norm < 1.0, ErrorCode::NormNotContractive,
          "Neumann series needs ||K||_inf < 1, measured " + std::to_string(norm));
  ScalarField term(phi.begin(), phi.end());
  ScalarField next(phi.size());
  for (int p = 1; p <= terms; ++p) {
    K.apply(term, next);
    std::swap(term, next);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += term[i];
  }
  return sum;
}

}  // namespace raysolve
