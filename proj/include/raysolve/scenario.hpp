#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "raysolve/discretization.hpp"
#include "raysolve/error.hpp"
#include "raysolve/geometry.hpp"
#include "raysolve/gmres.hpp"
#include "raysolve/io.hpp"
#include "raysolve/kernel.hpp"
#include "raysolve/medium.hpp"
#include "raysolve/sampled_field.hpp"

namespace raysolve {

inline constexpr int kConfigVersion = 1;

struct MediumSpec {
  /// `homogeneous`, `gaussian-bump` or `grid` (CSV samples).
  std::string preset = "homogeneous";
  double mu_a = 0.2;
  double mu_s = 2.0;
  std::string mu_a_csv;
  std::string mu_s_csv;
  /// Fourier truncation used when the line strategy is `fft`.
  int fourier_q = 16;
};

struct SourceSpec {
  /// `ring`, `four-bumps` or `csv`.
  std::string preset = "ring";
  std::string csv;
};

struct FmmSpec {
  int n = 4;
  std::size_t leaf_cap = 0;
  /// `auto`, `closed-form`, `quadrature` or `fft`.
  std::string line_strategy = "auto";
  std::string cache_file;
};

struct OutputSpec {
  bool fields = true;
  bool report = true;
  bool error_map = true;
};

struct RecoverSpec {
  bool enabled = false;
  std::size_t n_dirs = 64;
  int m_per_cell = 4;
};

struct RunConfig {
  int version = kConfigVersion;
  std::string name = "custom";
  std::size_t nx = 32;
  MediumSpec medium;
  SourceSpec source;
  FmmSpec fmm;
  GmresConfig gmres;
  /// `direct`, `fmm` or `both`.
  std::string backend = "both";
  OutputSpec outputs;
  RecoverSpec recover_phi;

  std::size_t unknowns() const { return nx * nx; }

  void validate() const {
    require(version == kConfigVersion, ErrorCode::ConfigError, "unsupported config version " + std::to_string(version));
    require(nx >= 2 && nx <= 4096, ErrorCode::ConfigError, "grid.nx must lie in [2, 4096]");
    require(backend == "direct" || backend == "fmm" || backend == "both", ErrorCode::ConfigError,
            "backend must be direct, fmm or both");
    require(backend != "both" || unknowns() <= 16384, ErrorCode::ConfigError,
            "backend 'both' needs N <= 16384; use 'fmm' for larger grids");
    require(fmm.n >= 2 && fmm.n <= 16, ErrorCode::ConfigError, "fmm.n must lie in [2, 16]");
    const std::set<std::string> strategies{"auto", "closed-form", "quadrature", "fft"};
    require(strategies.count(fmm.line_strategy) == 1, ErrorCode::ConfigError,
            "fmm.line_strategy must be auto, closed-form, quadrature or fft");
    const std::set<std::string> media{"homogeneous", "gaussian-bump", "grid"};
    require(media.count(medium.preset) == 1, ErrorCode::ConfigError,
            "medium.preset must be homogeneous, gaussian-bump or grid");
    const std::set<std::string> sources{"ring", "four-bumps", "csv"};
    require(sources.count(source.preset) == 1, ErrorCode::ConfigError, "source.preset must be ring, four-bumps or csv");
    require(source.preset != "csv" || !source.csv.empty(), ErrorCode::ConfigError, "source.csv path is required");
    require(medium.preset != "grid" || (!medium.mu_a_csv.empty() && !medium.mu_s_csv.empty()), ErrorCode::ConfigError,
            "grid media need medium.mu_a_csv and medium.mu_s_csv");
    require(medium.fourier_q >= 1, ErrorCode::ConfigError, "medium.fourier_q must be positive");
    require(!recover_phi.enabled || recover_phi.n_dirs >= 4, ErrorCode::ConfigError, "recover_phi.n_dirs must be >= 4");
    require(recover_phi.m_per_cell >= 1, ErrorCode::ConfigError, "recover_phi.m_per_cell must be >= 1");
    try {
      gmres.validate();
    } catch (const Error& e) {
      throw Error(ErrorCode::ConfigError, e.what());
    }
  }
};

namespace detail {

template <class T>
void read_key(const nlohmann::json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::ConfigError, where + "." + key + " has the wrong type");
  }
}

inline void check_keys(const nlohmann::json& obj, const std::set<std::string>& allowed, const std::string& where) {
  require(obj.is_object(), ErrorCode::ConfigError, where + " must be an object");
  for (const auto& [key, value] : obj.items())
    require(allowed.count(key) == 1, ErrorCode::ConfigError, "unknown key " + where + "." + key);
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& j) {
  using detail::check_keys;
  using detail::read_key;
  check_keys(j, {"version", "name", "grid", "medium", "source", "fmm", "gmres", "backend", "outputs", "recover_phi"},
             "config");
  require(j.contains("version"), ErrorCode::ConfigError, "config.version is required");
  RunConfig c;
  read_key(j, "version", c.version, "config");
  read_key(j, "name", c.name, "config");
  read_key(j, "backend", c.backend, "config");
  if (j.contains("grid")) {
    check_keys(j["grid"], {"nx"}, "grid");
    read_key(j["grid"], "nx", c.nx, "grid");
  }
  if (j.contains("medium")) {
    const auto& m = j["medium"];
    check_keys(m, {"preset", "mu_a", "mu_s", "mu_a_csv", "mu_s_csv", "fourier_q"}, "medium");
    read_key(m, "preset", c.medium.preset, "medium");
    read_key(m, "mu_a", c.medium.mu_a, "medium");
    read_key(m, "mu_s", c.medium.mu_s, "medium");
    read_key(m, "mu_a_csv", c.medium.mu_a_csv, "medium");
    read_key(m, "mu_s_csv", c.medium.mu_s_csv, "medium");
    read_key(m, "fourier_q", c.medium.fourier_q, "medium");
  }
  if (j.contains("source")) {
    check_keys(j["source"], {"preset", "csv"}, "source");
    read_key(j["source"], "preset", c.source.preset, "source");
    read_key(j["source"], "csv", c.source.csv, "source");
  }
  if (j.contains("fmm")) {
    const auto& f = j["fmm"];
    check_keys(f, {"n", "leaf_cap", "line_strategy", "cache_file"}, "fmm");
    read_key(f, "n", c.fmm.n, "fmm");
    read_key(f, "leaf_cap", c.fmm.leaf_cap, "fmm");
    read_key(f, "line_strategy", c.fmm.line_strategy, "fmm");
    read_key(f, "cache_file", c.fmm.cache_file, "fmm");
  }
  if (j.contains("gmres")) {
    check_keys(j["gmres"], {"rel_tol", "max_iter", "restart"}, "gmres");
    read_key(j["gmres"], "rel_tol", c.gmres.rel_tol, "gmres");
    read_key(j["gmres"], "max_iter", c.gmres.max_iter, "gmres");
    read_key(j["gmres"], "restart", c.gmres.restart, "gmres");
  }
  if (j.contains("outputs")) {
    check_keys(j["outputs"], {"fields", "report", "error_map"}, "outputs");
    read_key(j["outputs"], "fields", c.outputs.fields, "outputs");
    read_key(j["outputs"], "report", c.outputs.report, "outputs");
    read_key(j["outputs"], "error_map", c.outputs.error_map, "outputs");
  }
  if (j.contains("recover_phi")) {
    check_keys(j["recover_phi"], {"enabled", "n_dirs", "m_per_cell"}, "recover_phi");
    read_key(j["recover_phi"], "enabled", c.recover_phi.enabled, "recover_phi");
    read_key(j["recover_phi"], "n_dirs", c.recover_phi.n_dirs, "recover_phi");
    read_key(j["recover_phi"], "m_per_cell", c.recover_phi.m_per_cell, "recover_phi");
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorCode::ConfigError, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  RunConfig c = parse_config(j);
  // Relative CSV paths resolve against the config file's directory.
  const auto base = path.parent_path();
  for (std::string* p : {&c.source.csv, &c.medium.mu_a_csv, &c.medium.mu_s_csv})
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).string();
  return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"version", c.version},
          {"name", c.name},
          {"grid", {{"nx", c.nx}}},
          {"medium",
           {{"preset", c.medium.preset},
            {"mu_a", c.medium.mu_a},
            {"mu_s", c.medium.mu_s},
            {"mu_a_csv", c.medium.mu_a_csv},
            {"mu_s_csv", c.medium.mu_s_csv},
            {"fourier_q", c.medium.fourier_q}}},
          {"source", {{"preset", c.source.preset}, {"csv", c.source.csv}}},
          {"fmm",
           {{"n", c.fmm.n},
            {"leaf_cap", c.fmm.leaf_cap},
            {"line_strategy", c.fmm.line_strategy},
            {"cache_file", c.fmm.cache_file}}},
          {"gmres", {{"rel_tol", c.gmres.rel_tol}, {"max_iter", c.gmres.max_iter}, {"restart", c.gmres.restart}}},
          {"backend", c.backend},
          {"outputs",
           {{"fields", c.outputs.fields}, {"report", c.outputs.report}, {"error_map", c.outputs.error_map}}},
          {"recover_phi",
           {{"enabled", c.recover_phi.enabled},
            {"n_dirs", c.recover_phi.n_dirs},
            {"m_per_cell", c.recover_phi.m_per_cell}}}};
}

struct PresetInfo {
  std::string name;
  std::string description;
  RunConfig config;
};

/// Built-in scenarios, one per experiment family.
inline std::vector<PresetInfo> presets() {
  const auto make = [](std::string name, std::string medium, double mu_s, std::string source) {
    RunConfig c;
    c.name = std::move(name);
    c.medium.preset = std::move(medium);
    c.medium.mu_s = mu_s;
    c.source.preset = std::move(source);
    return c;
  };
  return {
      {"experiment1", "homogeneous mu_a=0.2 mu_s=2.0, ring source", make("experiment1", "homogeneous", 2.0, "ring")},
      {"experiment2", "gaussian-bump mu_s = 3 + 2 exp(-r^2/4), mu_a=0.2, ring source",
       make("experiment2", "gaussian-bump", 0.0, "ring")},
      {"experiment3", "homogeneous mu_a=0.2, mu_s set by --mu-s (default 2), four-bumps source",
       make("experiment3", "homogeneous", 2.0, "four-bumps")},
      {"experiment4", "homogeneous mu_a=0.2, mu_s set by --mu-s (default 2), ring source",
       make("experiment4", "homogeneous", 2.0, "ring")},
  };
}

inline std::optional<RunConfig> find_preset(const std::string& name) {
  for (auto& p : presets())
    if (p.name == name) return p.config;
  return std::nullopt;
}

inline double gaussian_bump_mu_s(Point p) {
  const double dx = p.x - 0.5, dy = p.y - 0.5;
  return 3.0 + 2.0 * std::exp(-(dx * dx + dy * dy) / 4.0);
}

inline LineStrategy resolve_strategy(const RunConfig& c) {
  const std::string& s = c.fmm.line_strategy;
  if (s == "closed-form") return LineStrategy::ClosedForm;
  if (s == "quadrature") return LineStrategy::Quadrature;
  if (s == "fft") return LineStrategy::Fft;
  return c.medium.preset == "homogeneous" ? LineStrategy::ClosedForm : LineStrategy::Quadrature;
}

inline SampledField load_sampled_field(const std::string& path) {
  auto values = read_field_csv(path);
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(values.size()))));
  require(side >= 1 && side * side == values.size(), ErrorCode::ConfigError, path + ": sample count is not a square");
  return SampledField(side, side, std::move(values));
}

/// Builds the medium of a config. An `fft` line strategy turns the
/// coefficients into truncated Fourier series sampled on a 2Q x 2Q grid.
inline Medium make_medium(const RunConfig& c) {
  const MediumSpec& m = c.medium;
  const bool fourier = c.fmm.line_strategy == "fft";
  try {
    if (m.preset == "homogeneous") {
      if (!fourier) return Medium::homogeneous(m.mu_a, m.mu_s);
      const auto side = static_cast<std::size_t>(2 * m.fourier_q);
      return build_fourier_medium(SampledField(side, side, std::vector<double>(side * side, m.mu_a)),
                                  SampledField(side, side, std::vector<double>(side * side, m.mu_s)), m.fourier_q);
    }
    if (m.preset == "gaussian-bump") {
      const double mu_a = m.mu_a;
      if (!fourier)
        return Medium::analytic([mu_a](Point) { return mu_a; }, gaussian_bump_mu_s,
                                "gaussian-bump:" + std::to_string(mu_a), 0.5);
      const auto side = static_cast<std::size_t>(2 * m.fourier_q);
      return build_fourier_medium(SampledField::from_function(side, side, [mu_a](Point) { return mu_a; }),
                                  SampledField::from_function(side, side, gaussian_bump_mu_s), m.fourier_q);
    }
    SampledField a = load_sampled_field(m.mu_a_csv);
    SampledField s = load_sampled_field(m.mu_s_csv);
    if (fourier) return build_fourier_medium(a, s, m.fourier_q);
    return Medium::grid_sampled(std::move(a), std::move(s));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IoError) throw;
    throw Error(ErrorCode::ConfigError, std::string("medium: ") + e.what());
  }
}

inline double ring_source(Point p) {
  const double r = distance(p, Point{0.5, 0.5});
  return r >= 0.15 && r <= 0.25 ? 1.0 : 0.0;
}

inline double four_bumps_source(Point p) {
  constexpr double kWidth = 0.05;
  double f = 0.0;
  for (double cy : {0.25, 0.75})
    for (double cx : {0.25, 0.75}) {
      const double dx = p.x - cx, dy = p.y - cy;
      f += std::exp(-(dx * dx + dy * dy) / (2.0 * kWidth * kWidth));
    }
  return f;
}

inline ScalarField make_source(const RunConfig& c, const Grid2D& grid) {
  ScalarField f(grid.size());
  if (c.source.preset == "csv") {
    f = read_field_csv(c.source.csv);
    require(f.size() == grid.size(), ErrorCode::ConfigError, c.source.csv + ": source has the wrong number of nodes");
    return f;
  }
  const bool ring = c.source.preset == "ring";
  for (std::size_t i = 0; i < grid.size(); ++i)
    f[i] = ring ? ring_source(grid.nodes[i]) : four_bumps_source(grid.nodes[i]);
  return f;
}

}  // namespace raysolve
