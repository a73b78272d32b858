#pragma once

#include <nlohmann/json.hpp>
#include <omp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "raysolve/discretization.hpp"
#include "raysolve/error.hpp"
#include "raysolve/fmm.hpp"
#include "raysolve/io.hpp"
#include "raysolve/kernel.hpp"
#include "raysolve/medium.hpp"
#include "raysolve/scenario.hpp"
#include "raysolve/solver.hpp"
#include "raysolve/transport.hpp"

namespace raysolve {

/// Everything a solve needs, built once from a config.
struct Scenario {
  RunConfig config;
  Grid2D grid;
  KernelEval kernel;
  SelfContribution sc;
  ScalarField f;
};

inline Scenario build_scenario(const RunConfig& c) {
  c.validate();
  Grid2D grid = build_grid(c.nx);
  Medium medium = make_medium(c);
  KernelEval kernel = [&] {
    try {
      return KernelEval(medium, resolve_strategy(c));
    } catch (const Error& e) {
      throw Error(ErrorCode::ConfigError, e.what());
    }
  }();
  SelfContribution sc = self_contribution(grid, kernel);
  ScalarField f = make_source(c, grid);
  return {c, std::move(grid), std::move(kernel), std::move(sc), std::move(f)};
}

/// Outcome of one backend on one scenario.
struct BackendRun {
  SolveReport report;
  ScalarField U;
  bool converged = true;
  std::string failure;
  FmmStats fmm;
};

namespace detail {

inline BackendRun finish_solve(const IntegralOperator& K, const Scenario& s, SolveReport report) {
  BackendRun run;
  const ScalarField phi = compute_phi(K, s.grid, s.kernel.medium(), s.f);
  try {
    SolveResult r = solve_U(K, phi, s.config.gmres, report);
    run.report = r.report;
    run.U = std::move(r.U);
  } catch (const NoConvergenceError& e) {
    run.report = e.partial().report;
    run.U = e.partial().U;
    run.converged = false;
    run.failure = e.what();
  }
  return run;
}

}  // namespace detail

inline BackendRun solve_fmm(const Scenario& s) {
  FmmOptions opts;
  opts.order = s.config.fmm.n;
  opts.leaf_cap = s.config.fmm.leaf_cap;
  opts.cache_file = s.config.fmm.cache_file;
  const FmmPlan plan = [&] {
    try {
      return FmmPlan(s.grid, s.kernel, s.sc, opts);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::OrderOutOfRange || e.code() == ErrorCode::CapTooSmall)
        throw Error(ErrorCode::ConfigError, e.what());
      throw;
    }
  }();
  SolveReport report;
  report.backend = Backend::Fmm;
  report.order = s.config.fmm.n;
  report.wall_seconds_setup = plan.stats().setup_seconds;
  BackendRun run = detail::finish_solve(plan, s, report);
  run.fmm = plan.stats();
  return run;
}

inline BackendRun solve_direct(const Scenario& s) {
  const DirectOperator op(s.grid, s.kernel, s.sc);
  SolveReport report;
  report.backend = Backend::Direct;
  report.wall_seconds_setup = op.setup_seconds();
  return detail::finish_solve(op, s, report);
}

struct RunOutcome {
  int exit_code = 0;
  nlohmann::json report;
  std::optional<BackendRun> fmm;
  std::optional<BackendRun> direct;
  double relative_error = std::numeric_limits<double>::quiet_NaN();
};

/// Executes one config and writes its artifacts under `out_dir`.
/// Exit code 0 on success, 3 when a solve does not converge.
inline RunOutcome run(const RunConfig& config, const std::filesystem::path& out_dir) {
  const Scenario s = build_scenario(config);
  RunOutcome out;
  const bool want_fmm = config.backend != "direct";
  const bool want_dir = config.backend != "fmm";
  if (want_fmm) out.fmm = solve_fmm(s);
  if (want_dir) out.direct = solve_direct(s);

  nlohmann::json rep;
  rep["version"] = kConfigVersion;
  rep["config"] = to_json(config);
  rep["N"] = s.grid.size();
  rep["n"] = config.fmm.n;
  rep["line_strategy"] = std::string(to_string(s.kernel.strategy()));
  rep["solves"] = nlohmann::json::array();
  const auto null_or = [](bool has, double v) { return has ? nlohmann::json(v) : nlohmann::json(nullptr); };
  rep["T_fmm"] = null_or(want_fmm, want_fmm ? out.fmm->report.wall_seconds_setup : 0.0);
  rep["T_fmm_gmres"] = null_or(want_fmm, want_fmm ? out.fmm->report.wall_seconds_solve : 0.0);
  rep["T_dir"] = null_or(want_dir, want_dir ? out.direct->report.wall_seconds_setup : 0.0);
  rep["T_dir_gmres"] = null_or(want_dir, want_dir ? out.direct->report.wall_seconds_solve : 0.0);
  bool converged = true;
  for (const auto* r : {&out.fmm, &out.direct}) {
    if (!r->has_value()) continue;
    auto j = (*r)->report.to_json();
    j["converged"] = (*r)->converged;
    if (!(*r)->converged) j["failure"] = (*r)->failure;
    rep["solves"].push_back(j);
    converged = converged && (*r)->converged;
  }
  if (want_fmm) {
    const FmmStats& st = out.fmm->fmm;
    rep["fmm"] = {{"setup_seconds", st.setup_seconds},       {"per_matvec_seconds", st.per_matvec_seconds},
                  {"kernel_evals", st.kernel_evals},         {"cache_bytes", st.cache_bytes},
                  {"tree_depth", st.tree_depth},             {"m2l_pairs", st.m2l_pairs},
                  {"m2l_blocks", st.m2l_blocks},             {"loaded_from_file", st.loaded_from_file}};
  }
  if (want_fmm && want_dir) {
    out.relative_error = relative_l2(out.direct->U, out.fmm->U);
    rep["relative_error"] = out.relative_error;
  } else {
    rep["relative_error"] = nullptr;
  }

  if (config.outputs.fields) {
    if (want_fmm) write_field_csv(out_dir / "U_fmm.csv", s.grid, out.fmm->U);
    if (want_dir) write_field_csv(out_dir / "U_dir.csv", s.grid, out.direct->U);
  }
  if (config.outputs.error_map && want_fmm && want_dir) {
    ScalarField diff(s.grid.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = out.direct->U[i] - out.fmm->U[i];
    write_field_csv(out_dir / "error_map.csv", s.grid, diff);
  }

  if (config.recover_phi.enabled && converged) {
    const ScalarField& U = want_fmm ? out.fmm->U : out.direct->U;
    const OrdinateSet ords(config.recover_phi.n_dirs);
    const auto t0 = std::chrono::steady_clock::now();
    const ScalarField q = recovery_source(s.grid, s.kernel.medium(), U, s.f);
    const AngularField phi = sweep(s.grid, s.kernel, q, ords, config.recover_phi.m_per_cell);
    const ScalarField back = angular_average(phi, ords);
    rep["recover_phi"] = {
        {"n_dirs", config.recover_phi.n_dirs},
        {"m_per_cell", config.recover_phi.m_per_cell},
        {"relative_l2_vs_U", relative_l2(U, back)},
        {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
    if (config.outputs.fields) write_angular_csv(out_dir / "Phi.csv", s.grid, phi, ords);
  }

  rep["status"] = converged ? "ok" : "no-convergence";
  out.exit_code = converged ? 0 : 3;
  if (config.outputs.report) write_json(out_dir / "report.json", rep);
  out.report = std::move(rep);
  return out;
}

// ---------------------------------------------------------------------------
// Experiment suites

struct SweepOptions {
  int jobs = 1;
  /// Largest N to include; 0 keeps the suite's full lattice.
  std::size_t max_n = 0;
  /// Overrides the suite's N values when nonempty.
  std::vector<std::size_t> sizes;
  /// Direct solves are skipped above this N.
  std::size_t max_direct_n = 16384;
  GmresConfig gmres;
};

struct SweepRow {
  std::size_t N = 0;
  int n = 0;
  std::string medium;
  double mu_s = 0.0;
  std::string source;
  double t_fmm = 0.0;
  double t_fmm_gmres = 0.0;
  int iterations_fmm = 0;
  bool has_direct = false;
  double t_dir = 0.0;
  double t_dir_gmres = 0.0;
  int iterations_dir = 0;
  double relative_error = std::numeric_limits<double>::quiet_NaN();
  double u_min = 0.0;
  bool converged = true;
};

struct ScalingRow {
  std::size_t N = 0;
  int n = 0;
  double fmm_matvec_seconds = 0.0;
  double fmm_ratio = std::numeric_limits<double>::quiet_NaN();
  bool has_direct = false;
  double dir_matvec_seconds = 0.0;
  double dir_ratio = std::numeric_limits<double>::quiet_NaN();
};

/// Shares direct-summation solves between lattice points that differ only
/// in the FMM order. Safe to use from several worker threads.
class DirectSolveCache {
 public:
  std::shared_ptr<const BackendRun> get(const Scenario& s) {
    const std::string key = std::to_string(s.kernel.medium().fingerprint()) + "|" + s.config.source.preset + "|" +
                            std::to_string(s.config.nx) + "|" + std::to_string(s.config.gmres.rel_tol) + "|" +
                            std::to_string(s.config.gmres.max_iter);
    std::promise<std::shared_ptr<const BackendRun>> promise;
    std::shared_future<std::shared_ptr<const BackendRun>> fut;
    bool owner = false;
    {
      std::lock_guard lock(mutex_);
      auto it = cache_.find(key);
      if (it == cache_.end()) {
        fut = promise.get_future().share();
        cache_.emplace(key, fut);
        owner = true;
      } else {
        fut = it->second;
      }
    }
    if (owner) {
      try {
        promise.set_value(std::make_shared<const BackendRun>(solve_direct(s)));
      } catch (...) {
        promise.set_exception(std::current_exception());
      }
    }
    return fut.get();
  }

 private:
  std::mutex mutex_;
  std::map<std::string, std::shared_future<std::shared_ptr<const BackendRun>>> cache_;
};

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"exp1", "exp2", "exp3", "exp4", "scaling"};
  return names;
}

namespace detail {

struct LatticePoint {
  RunConfig config;
  bool direct = false;
};

inline std::vector<std::size_t> suite_sizes(const std::string& suite, const SweepOptions& o) {
  std::vector<std::size_t> sizes = o.sizes;
  if (sizes.empty()) {
    if (suite == "exp1" || suite == "scaling") sizes = {1024, 4096, 16384, 65536, 262144};
    else if (suite == "exp2") sizes = {1024, 4096, 16384, 65536};
    else sizes = {1024};
  }
  std::vector<std::size_t> kept;
  for (std::size_t N : sizes) {
    const auto nx = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(N))));
    require(nx * nx == N && nx >= 2, ErrorCode::ConfigError, "suite sizes must be perfect squares");
    if (o.max_n == 0 || N <= o.max_n) kept.push_back(N);
  }
  return kept;
}

inline std::vector<LatticePoint> suite_lattice(const std::string& suite, const SweepOptions& o) {
  std::vector<LatticePoint> pts;
  const auto sizes = suite_sizes(suite, o);
  const auto base = [&](std::size_t N, int n) {
    RunConfig c;
    c.nx = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(N))));
    c.fmm.n = n;
    c.gmres = o.gmres;
    c.backend = "fmm";
    c.outputs = {false, false, false};
    return c;
  };
  if (suite == "exp1" || suite == "exp2") {
    for (int n : {4, 6, 9})
      for (std::size_t N : sizes) {
        RunConfig c = base(N, n);
        c.name = suite;
        c.medium.preset = suite == "exp1" ? "homogeneous" : "gaussian-bump";
        c.source.preset = "ring";
        pts.push_back({c, N <= o.max_direct_n});
      }
  } else if (suite == "exp3" || suite == "exp4") {
    for (std::size_t N : sizes)
      for (int n : {4, 6, 9})
        for (double mu_s : {2.0, 5.0, 10.0}) {
          RunConfig c = base(N, n);
          c.name = suite;
          c.medium.mu_s = mu_s;
          c.source.preset = suite == "exp3" ? "four-bumps" : "ring";
          pts.push_back({c, N <= o.max_direct_n});
        }
  } else {
    throw Error(ErrorCode::ConfigError, "unknown suite '" + suite + "'; expected exp1, exp2, exp3, exp4 or scaling");
  }
  return pts;
}

/// Runs body(i) for i in [0, count) on `jobs` worker threads.
template <class Body>
void parallel_for_jobs(std::size_t count, int jobs, Body&& body) {
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(count)));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  const int threads_each = std::max(1, omp_get_max_threads() / workers);
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      omp_set_num_threads(threads_each);
      try {
        for (std::size_t i = next++; i < count; i = next++) body(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// Runs every lattice point of an exp* suite.
inline std::vector<SweepRow> run_suite(const std::string& suite, const SweepOptions& opts,
                                       DirectSolveCache* shared_cache = nullptr) {
  DirectSolveCache local;
  DirectSolveCache& cache = shared_cache ? *shared_cache : local;
  const auto pts = detail::suite_lattice(suite, opts);
  std::vector<SweepRow> rows(pts.size());
  detail::parallel_for_jobs(pts.size(), opts.jobs, [&](std::size_t i) {
    const Scenario s = build_scenario(pts[i].config);
    const BackendRun fmm = solve_fmm(s);
    SweepRow& r = rows[i];
    r.N = s.grid.size();
    r.n = s.config.fmm.n;
    r.medium = s.config.medium.preset;
    r.mu_s = s.config.medium.preset == "homogeneous" ? s.config.medium.mu_s
                                                     : std::numeric_limits<double>::quiet_NaN();
    r.source = s.config.source.preset;
    r.t_fmm = fmm.report.wall_seconds_setup;
    r.t_fmm_gmres = fmm.report.wall_seconds_solve;
    r.iterations_fmm = fmm.report.iterations;
    r.converged = fmm.converged;
    r.u_min = *std::min_element(fmm.U.begin(), fmm.U.end());
    if (pts[i].direct) {
      const auto dir = cache.get(s);
      r.has_direct = true;
      r.t_dir = dir->report.wall_seconds_setup;
      r.t_dir_gmres = dir->report.wall_seconds_solve;
      r.iterations_dir = dir->report.iterations;
      r.relative_error = relative_l2(dir->U, fmm.U);
      r.converged = r.converged && dir->converged;
      r.u_min = std::min(r.u_min, *std::min_element(dir->U.begin(), dir->U.end()));
    }
  });
  return rows;
}

/// Per-matvec wall time of the FMM (n = 4) and direct operators on the
/// homogeneous experiment1 medium, best of several repetitions.
inline std::vector<ScalingRow> run_scaling(const SweepOptions& opts, int order = 4, int repeats = 5) {
  const auto sizes = detail::suite_sizes("scaling", opts);
  std::vector<ScalingRow> rows;
  for (std::size_t N : sizes) {
    RunConfig c;
    c.nx = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(N))));
    c.fmm.n = order;
    c.backend = "fmm";
    const Scenario s = build_scenario(c);
    ScalarField u(N);
    for (std::size_t i = 0; i < N; ++i) u[i] = 1.0 + 0.5 * std::sin(7.0 * s.grid.nodes[i].x + 3.0 * s.grid.nodes[i].y);
    ScalarField y(N);
    const auto best_of = [&](const IntegralOperator& op) {
      double best = std::numeric_limits<double>::infinity();
      op.apply(u, y);
      for (int r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        op.apply(u, y);
        best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      }
      return best;
    };
    ScalingRow row;
    row.N = N;
    row.n = order;
    {
      FmmOptions fo;
      fo.order = order;
      const FmmPlan plan(s.grid, s.kernel, s.sc, fo);
      row.fmm_matvec_seconds = best_of(plan);
    }
    if (N <= opts.max_direct_n) {
      const DirectOperator op(s.grid, s.kernel, s.sc);
      row.has_direct = true;
      row.dir_matvec_seconds = best_of(op);
    }
    if (!rows.empty() && rows.back().N * 4 == N) {
      row.fmm_ratio = row.fmm_matvec_seconds / rows.back().fmm_matvec_seconds;
      if (row.has_direct && rows.back().has_direct) row.dir_ratio = row.dir_matvec_seconds / rows.back().dir_matvec_seconds;
    }
    rows.push_back(row);
  }
  return rows;
}

namespace detail {

inline std::string cell(double v, bool present = true) {
  if (!present || std::isnan(v)) return "--";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

}  // namespace detail

inline void write_suite_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  auto os = detail::open_for_write(path);
  os << "N,n,mu,mu_s,source,T_fmm,T_fmm_gmres,T_dir,T_dir_gmres,relative_error,iterations_fmm,iterations_dir\n";
  for (const auto& r : rows) {
    const bool homog = r.medium == "homogeneous";
    const std::string mu = homog ? detail::cell(r.mu_s + 0.2) : "variable";
    const std::string mu_s = homog ? detail::cell(r.mu_s) : "variable";
    os << r.N << ',' << r.n << ',' << mu << ',' << mu_s << ',' << r.source << ',' << detail::cell(r.t_fmm) << ','
       << detail::cell(r.t_fmm_gmres) << ',' << detail::cell(r.t_dir, r.has_direct) << ','
       << detail::cell(r.t_dir_gmres, r.has_direct) << ',' << detail::cell(r.relative_error, r.has_direct) << ','
       << r.iterations_fmm << ',' << (r.has_direct ? std::to_string(r.iterations_dir) : "--") << '\n';
  }
  require(static_cast<bool>(os), ErrorCode::IoError, "failed writing " + path.string());
}

inline void write_scaling_csv(const std::filesystem::path& path, const std::vector<ScalingRow>& rows) {
  auto os = detail::open_for_write(path);
  os << "N,n,fmm_matvec_s,fmm_ratio,dir_matvec_s,dir_ratio,ideal_fmm_ratio\n";
  for (const auto& r : rows)
    os << r.N << ',' << r.n << ',' << detail::cell(r.fmm_matvec_seconds) << ',' << detail::cell(r.fmm_ratio) << ','
       << detail::cell(r.dir_matvec_seconds, r.has_direct) << ',' << detail::cell(r.dir_ratio) << ",4.0\n";
  require(static_cast<bool>(os), ErrorCode::IoError, "failed writing " + path.string());
}

}  // namespace raysolve
