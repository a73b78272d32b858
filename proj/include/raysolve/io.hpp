#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "raysolve/discretization.hpp"
#include "raysolve/error.hpp"
#include "raysolve/geometry.hpp"
#include "raysolve/transport.hpp"

namespace raysolve {

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorCode::IoError, "cannot open for writing: " + path.string());
  return os;
}

}  // namespace detail

/// CSV with header `x,y,value`, one row per node in row-major order.
inline void write_field_csv(const std::filesystem::path& path, const Grid2D& grid, std::span<const double> values) {
  require(values.size() == grid.size(), ErrorCode::DimensionMismatch, "field size does not match the grid");
  auto os = detail::open_for_write(path);
  os << "x,y,value\n";
  for (std::size_t i = 0; i < grid.size(); ++i)
    os << detail::format_double(grid.nodes[i].x) << ',' << detail::format_double(grid.nodes[i].y) << ','
       << detail::format_double(values[i]) << '\n';
  require(static_cast<bool>(os), ErrorCode::IoError, "failed writing " + path.string());
}

/// Reads the value column of an `x,y,value` CSV.
inline std::vector<double> read_field_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), ErrorCode::ConfigError, "empty CSV file: " + path.string());
  require(line.rfind("x,y,value", 0) == 0, ErrorCode::ConfigError, "expected header x,y,value in " + path.string());
  std::vector<double> values;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell[3];
    for (auto& c : cell)
      require(static_cast<bool>(std::getline(ss, c, ',')), ErrorCode::ConfigError,
              path.string() + ": row " + std::to_string(row) + " needs three columns");
    try {
      values.push_back(std::stod(cell[2]));
    } catch (const std::exception&) {
      throw Error(ErrorCode::ConfigError, path.string() + ": row " + std::to_string(row) + " has a bad value");
    }
  }
  return values;
}

/// CSV with header `x,y,theta,value`, node-major then ordinate.
inline void write_angular_csv(const std::filesystem::path& path, const Grid2D& grid, const AngularField& phi,
                              const OrdinateSet& ords) {
  require(phi.nodes == grid.size() && phi.dirs == ords.size(), ErrorCode::DimensionMismatch,
          "angular field does not match the grid and ordinates");
  auto os = detail::open_for_write(path);
  os << "x,y,theta,value\n";
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (std::size_t d = 0; d < ords.size(); ++d)
      os << detail::format_double(grid.nodes[i].x) << ',' << detail::format_double(grid.nodes[i].y) << ','
         << detail::format_double(ords.theta_of(d)) << ',' << detail::format_double(phi.at(i, d)) << '\n';
  require(static_cast<bool>(os), ErrorCode::IoError, "failed writing " + path.string());
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto os = detail::open_for_write(path);
  os << j.dump(2) << '\n';
  require(static_cast<bool>(os), ErrorCode::IoError, "failed writing " + path.string());
}

inline double relative_l2(std::span<const double> reference, std::span<const double> approx) {
  require(reference.size() == approx.size(), ErrorCode::DimensionMismatch, "fields differ in size");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = reference[i] - approx[i];
    num += d * d;
    den += reference[i] * reference[i];
  }
  return den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
}

}  // namespace raysolve
