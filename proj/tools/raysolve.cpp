#include <CLI11.hpp>
#include <omp.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "raysolve/raysolve.hpp"

namespace {

using namespace raysolve;

constexpr int kExitConfig = 2;

struct RunOverrides {
  std::optional<int> n;
  std::optional<std::size_t> nx;
  std::optional<double> mu_s;
  std::optional<double> mu_a;
  std::optional<std::string> backend;
  std::optional<std::string> line_strategy;
  std::optional<std::size_t> leaf_cap;
  std::optional<double> rel_tol;
  std::optional<std::size_t> n_dirs;
  bool recover_phi = false;
};

RunConfig resolve_config(const std::string& target, const RunOverrides& o) {
  RunConfig c;
  if (auto preset = find_preset(target)) {
    c = *preset;
  } else {
    require(std::filesystem::exists(target), ErrorCode::ConfigError,
            "'" + target + "' is neither a preset nor a config file (see `raysolve presets`)");
    c = load_config(target);
  }
  if (o.n) c.fmm.n = *o.n;
  if (o.nx) c.nx = *o.nx;
  if (o.mu_s) c.medium.mu_s = *o.mu_s;
  if (o.mu_a) c.medium.mu_a = *o.mu_a;
  if (o.backend) c.backend = *o.backend;
  if (o.line_strategy) c.fmm.line_strategy = *o.line_strategy;
  if (o.leaf_cap) c.fmm.leaf_cap = *o.leaf_cap;
  if (o.rel_tol) c.gmres.rel_tol = *o.rel_tol;
  if (o.recover_phi) c.recover_phi.enabled = true;
  if (o.n_dirs) c.recover_phi.n_dirs = *o.n_dirs;
  c.validate();
  return c;
}

int command_run(const std::string& target, const RunOverrides& o, const std::string& out) {
  const RunConfig config = resolve_config(target, o);
  const RunOutcome r = run(config, out);
  std::printf("%s: N=%zu n=%d backend=%s\n", config.name.c_str(), config.unknowns(), config.fmm.n,
              config.backend.c_str());
  for (const auto& s : r.report["solves"])
    std::printf("  %-6s iterations=%d residual=%.2e setup=%.3fs solve=%.3fs\n",
                s["backend"].get<std::string>().c_str(), s["iterations"].get<int>(), s["residual"].get<double>(),
                s["setup_s"].get<double>(), s["solve_s"].get<double>());
  if (!std::isnan(r.relative_error)) std::printf("  relative error ||U_dir - U_fmm|| / ||U_dir|| = %.3e\n", r.relative_error);
  if (r.report.contains("recover_phi"))
    std::printf("  Phi recovery: relative l2 vs U = %.3e\n", r.report["recover_phi"]["relative_l2_vs_U"].get<double>());
  std::printf("  artifacts in %s\n", out.c_str());
  if (r.exit_code != 0) std::fprintf(stderr, "error: GMRES did not converge\n");
  return r.exit_code;
}

int command_sweep(const std::string& suite, const SweepOptions& opts, const std::string& out) {
  const std::filesystem::path dir(out);
  if (suite == "scaling") {
    const auto rows = run_scaling(opts);
    write_scaling_csv(dir / "scaling.csv", rows);
    for (const auto& r : rows)
      std::printf("N=%-7zu fmm=%.3es ratio=%s direct=%s ratio=%s\n", r.N, r.fmm_matvec_seconds,
                  detail::cell(r.fmm_ratio).c_str(), detail::cell(r.dir_matvec_seconds, r.has_direct).c_str(),
                  detail::cell(r.dir_ratio).c_str());
    std::printf("wrote %s\n", (dir / "scaling.csv").string().c_str());
    return 0;
  }
  const auto rows = run_suite(suite, opts);
  write_suite_csv(dir / (suite + ".csv"), rows);
  bool converged = true;
  for (const auto& r : rows) {
    std::printf("N=%-7zu n=%d mu_s=%-8s fmm=%.2fs+%.2fs direct=%s error=%s\n", r.N, r.n,
                r.medium == "homogeneous" ? detail::cell(r.mu_s).c_str() : "variable", r.t_fmm, r.t_fmm_gmres,
                detail::cell(r.t_dir + r.t_dir_gmres, r.has_direct).c_str(),
                detail::cell(r.relative_error, r.has_direct).c_str());
    converged = converged && r.converged;
  }
  std::printf("wrote %s\n", (dir / (suite + ".csv")).string().c_str());
  return converged ? 0 : 3;
}

int command_presets() {
  for (const auto& p : presets()) std::printf("%-12s %s\n", p.name.c_str(), p.description.c_str());
  std::printf("\nsuites: ");
  for (const auto& s : suite_names()) std::printf("%s ", s.c_str());
  std::printf("\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* env = std::getenv("RAYSOLVE_THREADS")) {
    const int threads = std::atoi(env);
    if (threads > 0) omp_set_num_threads(threads);
  }

  CLI::App app{"raysolve: fast solver for the 2-D isotropic radiative transfer equation"};
  app.require_subcommand(1);

  std::string out = "out";
  std::string target;
  RunOverrides ov;
  auto* run_cmd = app.add_subcommand("run", "Solve one scenario given as a JSON config file or a preset name");
  run_cmd->add_option("config", target, "Config file or preset name")->required();
  run_cmd->add_option("--out", out, "Output directory");
  run_cmd->add_option("--n", ov.n, "Chebyshev order per axis");
  run_cmd->add_option("--nx", ov.nx, "Cells per axis (N = nx^2)");
  run_cmd->add_option("--mu-s", ov.mu_s, "Scattering coefficient (homogeneous media)");
  run_cmd->add_option("--mu-a", ov.mu_a, "Absorption coefficient");
  run_cmd->add_option("--backend", ov.backend, "direct, fmm or both");
  run_cmd->add_option("--line-strategy", ov.line_strategy, "auto, closed-form, quadrature or fft");
  run_cmd->add_option("--leaf-cap", ov.leaf_cap, "Maximum nodes per FMM leaf");
  run_cmd->add_option("--rel-tol", ov.rel_tol, "GMRES relative tolerance");
  run_cmd->add_flag("--recover-phi", ov.recover_phi, "Recover Phi by a transport sweep after solving");
  run_cmd->add_option("--n-dirs", ov.n_dirs, "Ordinates for the Phi recovery");

  std::string suite;
  SweepOptions sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run an experiment suite and write its table");
  sweep_cmd->add_option("suite", suite, "exp1, exp2, exp3, exp4 or scaling")->required();
  sweep_cmd->add_option("--out", out, "Output directory");
  sweep_cmd->add_option("--jobs", sweep.jobs, "Lattice points solved concurrently")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--max-n", sweep.max_n, "Skip lattice points with N above this");
  sweep_cmd->add_option("--sizes", sweep.sizes, "Explicit list of N values")->delimiter(',');
  sweep_cmd->add_option("--max-direct-n", sweep.max_direct_n, "Largest N solved by direct summation");

  app.add_subcommand("presets", "List built-in scenarios and suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run_cmd) return command_run(target, ov, out);
    if (*sweep_cmd) return command_sweep(suite, sweep, out);
    return command_presets();
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code() == ErrorCode::ConfigError ? kExitConfig : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
