#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "raysolve/error.hpp"
#include "raysolve/geometry.hpp"

namespace raysolve {

/// Cell-centred samples of a scalar function on the unit square.
///
/// Sample (i, j) sits at ((i + 0.5) / nx, (j + 0.5) / ny) and is stored at
/// index j * nx + i. Between sample centres the field is bilinear; outside
/// the outermost centres it is held constant.
class SampledField {
 public:
  SampledField() = default;

  SampledField(std::size_t nx, std::size_t ny, std::vector<double> values)
      : nx_(nx), ny_(ny), values_(std::move(values)) {
    require(nx_ >= 1 && ny_ >= 1, ErrorCode::InvalidResolution, "sampled field needs at least one sample per axis");
    require(values_.size() == nx_ * ny_, ErrorCode::DimensionMismatch, "sample count does not match nx * ny");
  }

  template <class F>
  static SampledField from_function(std::size_t nx, std::size_t ny, F&& f) {
    std::vector<double> v(nx * ny);
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i)
        v[j * nx + i] = f(Point{(static_cast<double>(i) + 0.5) / static_cast<double>(nx),
                                (static_cast<double>(j) + 0.5) / static_cast<double>(ny)});
    return SampledField(nx, ny, std::move(v));
  }

  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  const std::vector<double>& values() const { return values_; }
  double at(std::size_t i, std::size_t j) const { return values_[j * nx_ + i]; }

  double min() const { return *std::min_element(values_.begin(), values_.end()); }
  double max() const { return *std::max_element(values_.begin(), values_.end()); }

  double spacing() const { return 1.0 / static_cast<double>(std::max(nx_, ny_)); }

  double operator()(Point p) const {
    auto locate = [](double coord, std::size_t n, std::size_t& i0, double& frac) {
      if (n == 1) {
        i0 = 0;
        frac = 0.0;
        return;
      }
      const double u = std::clamp(coord * static_cast<double>(n) - 0.5, 0.0, static_cast<double>(n - 1));
      i0 = std::min(static_cast<std::size_t>(u), n - 2);
      frac = u - static_cast<double>(i0);
    };
    std::size_t i0, j0;
    double fx, fy;
    locate(p.x, nx_, i0, fx);
    locate(p.y, ny_, j0, fy);
    const std::size_t i1 = nx_ == 1 ? i0 : i0 + 1;
    const std::size_t j1 = ny_ == 1 ? j0 : j0 + 1;
    const double lo = (1.0 - fx) * at(i0, j0) + fx * at(i1, j0);
    const double hi = (1.0 - fx) * at(i0, j1) + fx * at(i1, j1);
    return (1.0 - fy) * lo + fy * hi;
  }

 private:
  std::size_t nx_ = 0;
  std::size_t ny_ = 0;
  std::vector<double> values_;
};

}  // namespace raysolve
