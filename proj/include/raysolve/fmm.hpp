#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "raysolve/chebyshev.hpp"
#include "raysolve/discretization.hpp"
#include "raysolve/error.hpp"
#include "raysolve/geometry.hpp"
#include "raysolve/kernel.hpp"

namespace raysolve {

/// Uniform quadtree over the unit square.
///
/// Level l has 4^l boxes; box (ix, iy) has index iy * 2^l + ix. The leaf
/// level is the shallowest one at which no leaf holds more than `leaf_cap`
/// nodes. Far interactions exist from level 2 down.
class FmmTree {
 public:
  FmmTree(const Grid2D& grid, std::size_t leaf_cap) {
    require(leaf_cap >= 1, ErrorCode::CapTooSmall, "leaf capacity must be positive");
    const std::size_t n = grid.size();
    for (leaf_level_ = 0;; ++leaf_level_) {
      require(leaf_level_ <= 15, ErrorCode::CapTooSmall, "leaf capacity too small for the grid");
      std::vector<std::size_t> counts(boxes(leaf_level_), 0);
      for (const Point& p : grid.nodes) ++counts[box_of(p, leaf_level_)];
      if (*std::max_element(counts.begin(), counts.end()) <= leaf_cap) break;
    }

    const std::size_t leaves = boxes(leaf_level_);
    leaf_begin_.assign(leaves + 1, 0);
    std::vector<std::size_t> leaf_of(n);
    for (std::size_t i = 0; i < n; ++i) {
      leaf_of[i] = box_of(grid.nodes[i], leaf_level_);
      ++leaf_begin_[leaf_of[i] + 1];
    }
    for (std::size_t b = 0; b < leaves; ++b) leaf_begin_[b + 1] += leaf_begin_[b];
    order_.resize(n);
    std::vector<std::size_t> fill(leaf_begin_.begin(), leaf_begin_.end() - 1);
    for (std::size_t i = 0; i < n; ++i) order_[fill[leaf_of[i]]++] = i;

    interactions_.resize(static_cast<std::size_t>(leaf_level_) + 1);
    for (int l = 2; l <= leaf_level_; ++l) {
      const long side = 1L << l;
      auto& lists = interactions_[static_cast<std::size_t>(l)];
      lists.resize(boxes(l));
      for (long iy = 0; iy < side; ++iy)
        for (long ix = 0; ix < side; ++ix) {
          const long px = ix >> 1, py = iy >> 1;
          for (long ny = 2 * (py - 1); ny < 2 * (py + 2); ++ny)
            for (long nx = 2 * (px - 1); nx < 2 * (px + 2); ++nx) {
              if (nx < 0 || ny < 0 || nx >= side || ny >= side) continue;
              if (std::max(std::labs(nx - ix), std::labs(ny - iy)) <= 1) continue;
              lists[static_cast<std::size_t>(iy * side + ix)].push_back(static_cast<std::uint32_t>(ny * side + nx));
            }
        }
    }

    near_.resize(leaves);
    const long side = 1L << leaf_level_;
    for (long iy = 0; iy < side; ++iy)
      for (long ix = 0; ix < side; ++ix)
        for (long ny = iy - 1; ny <= iy + 1; ++ny)
          for (long nx = ix - 1; nx <= ix + 1; ++nx)
            if (nx >= 0 && ny >= 0 && nx < side && ny < side)
              near_[static_cast<std::size_t>(iy * side + ix)].push_back(static_cast<std::uint32_t>(ny * side + nx));
  }

  static std::size_t boxes(int level) { return std::size_t{1} << (2 * level); }

  static std::size_t box_of(Point p, int level) {
    const long side = 1L << level;
    const auto clampi = [side](double v) { return std::clamp(static_cast<long>(std::floor(v * side)), 0L, side - 1); };
    return static_cast<std::size_t>(clampi(p.y) * side + clampi(p.x));
  }

  static Point center(int level, std::size_t box) {
    const std::size_t side = std::size_t{1} << level;
    const double w = 1.0 / static_cast<double>(side);
    return {(static_cast<double>(box % side) + 0.5) * w, (static_cast<double>(box / side) + 0.5) * w};
  }

  static double half_width(int level) { return 0.5 / static_cast<double>(std::size_t{1} << level); }

  int leaf_level() const { return leaf_level_; }

  /// Grid node indices sorted by leaf; leaf b owns order()[leaf_begin(b) .. leaf_begin(b+1)).
  const std::vector<std::size_t>& order() const { return order_; }
  std::size_t leaf_begin(std::size_t leaf) const { return leaf_begin_[leaf]; }
  std::size_t leaf_count(std::size_t leaf) const { return leaf_begin_[leaf + 1] - leaf_begin_[leaf]; }

  /// Well-separated same-level boxes: children of the parent's neighbours
  /// that are not adjacent to the box itself.
  const std::vector<std::uint32_t>& interaction_list(int level, std::size_t box) const {
    return interactions_[static_cast<std::size_t>(level)][box];
  }

  /// Adjacent leaves, the leaf itself included.
  const std::vector<std::uint32_t>& near_list(std::size_t leaf) const { return near_[leaf]; }

 private:
  int leaf_level_ = 0;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> leaf_begin_;
  std::vector<std::vector<std::vector<std::uint32_t>>> interactions_;
  std::vector<std::vector<std::uint32_t>> near_;
};

struct FmmOptions {
  int order = 4;
  /// 0 selects 4 n^2.
  std::size_t leaf_cap = 0;
  /// Near-field blocks beyond this size are recomputed every matvec.
  std::size_t near_cache_budget = std::size_t{1} << 31;
  /// When set, kernel blocks are loaded from this file if present, and
  /// written to it after being computed otherwise.
  std::string cache_file;
};

struct FmmStats {
  double setup_seconds = 0.0;
  double per_matvec_seconds = 0.0;  // most recent matvec
  double min_matvec_seconds = 0.0;
  std::uint64_t kernel_evals = 0;
  std::size_t cache_bytes = 0;
  int tree_depth = 0;
  std::size_t matvecs = 0;
  std::size_t m2l_pairs = 0;
  std::size_t m2l_blocks = 0;
  bool near_cached = false;
  bool loaded_from_file = false;
};

/// Black-box (Chebyshev interpolation) FMM for the discrete operator K.
///
/// The smooth factor E(x, y) / (2 pi |x - y|) is interpolated; mu_s(y_j)
/// and the weight w_j are applied exactly at the sources. Every kernel value
/// the matvec needs is computed during construction, so matvecs perform no
/// kernel evaluations unless the near field exceeds its cache budget.
class FmmPlan final : public IntegralOperator {
 public:
  static constexpr std::uint32_t kCacheVersion = 1;

  FmmPlan(const Grid2D& grid, const KernelEval& kernel, SelfContribution sc, FmmOptions opts = {})
      : grid_(grid),
        kernel_(kernel),
        sc_(std::move(sc)),
        interp_(checked_order(opts.order)),
        leaf_cap_(opts.leaf_cap == 0 ? static_cast<std::size_t>(4 * opts.order * opts.order) : opts.leaf_cap),
        tree_(grid, checked_cap(leaf_cap_, opts.order)) {
    const auto t0 = std::chrono::steady_clock::now();
    require(sc_.diag.size() == grid_.size(), ErrorCode::DimensionMismatch, "self contribution does not match the grid");
    n1_ = static_cast<std::size_t>(interp_.order());
    nn_ = n1_ * n1_;
    build_geometry();
    build_lists();

    bool loaded = false;
    if (!opts.cache_file.empty() && std::filesystem::exists(opts.cache_file)) {
      load_cache(opts.cache_file);
      loaded = true;
    } else {
      compute_m2l_blocks();
      compute_near(opts.near_cache_budget);
      if (!opts.cache_file.empty()) save_cache(opts.cache_file);
    }
    stats_.loaded_from_file = loaded;
    stats_.setup_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    stats_.tree_depth = tree_.leaf_level();
    stats_.m2l_blocks = m2l_pool_.size() / (nn_ * nn_);
    stats_.near_cached = near_mode_ != NearMode::OnTheFly;
    stats_.cache_bytes = (m2l_pool_.size() + near_pool_.size() + offsets_.size()) * sizeof(double);
  }

  std::size_t size() const override { return grid_.size(); }
  using IntegralOperator::apply;

  void apply(std::span<const double> u, std::span<double> out) const override {
    const std::size_t n = grid_.size();
    require(u.size() == n && out.size() == n, ErrorCode::DimensionMismatch, "field size does not match the plan");
    const auto t0 = std::chrono::steady_clock::now();
    const int leaf_level = tree_.leaf_level();

    // Sources in leaf order, scaled by w_j mu_s(y_j).
    std::vector<double> w(n);
    for (std::size_t s = 0; s < n; ++s) w[s] = source_scale_[s] * u[tree_.order()[s]];
    std::vector<double> acc(n, 0.0);

    if (leaf_level >= 2) {
      std::vector<std::vector<double>> up(static_cast<std::size_t>(leaf_level) + 1);
      std::vector<std::vector<double>> down(static_cast<std::size_t>(leaf_level) + 1);
      for (int l = 2; l <= leaf_level; ++l) {
        up[static_cast<std::size_t>(l)].assign(FmmTree::boxes(l) * nn_, 0.0);
        down[static_cast<std::size_t>(l)].assign(FmmTree::boxes(l) * nn_, 0.0);
      }
      upward(w, up);
      translate(up, down);
      downward(down);
      evaluate_far(down[static_cast<std::size_t>(leaf_level)], acc);
    }
    near_field(w, acc);

    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t i = tree_.order()[s];
      out[i] = acc[s] + sc_.diag[i] * u[i];
    }

    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    stats_.per_matvec_seconds = dt;
    stats_.min_matvec_seconds = stats_.matvecs == 0 ? dt : std::min(stats_.min_matvec_seconds, dt);
    ++stats_.matvecs;
  }

  const FmmTree& tree() const { return tree_; }
  const ChebInterp& interp() const { return interp_; }
  std::size_t leaf_cap() const { return leaf_cap_; }
  FmmStats stats() const { return stats_; }

  /// M2L kernel block for target box `t` and source box `s` at `level`,
  /// row-major n^2 x n^2: entry (m, m') is E/(2 pi r) between the m-th
  /// Chebyshev point of t and the m'-th of s.
  std::vector<double> m2l_block(int level, std::size_t t, std::size_t s) const {
    const auto& list = m2l_[static_cast<std::size_t>(level)][t];
    for (const auto& e : list)
      if (e.source == s) {
        std::vector<double> out(nn_ * nn_);
        const double* b = m2l_pool_.data() + e.block * nn_ * nn_;
        for (std::size_t m = 0; m < nn_; ++m)
          for (std::size_t mp = 0; mp < nn_; ++mp) out[m * nn_ + mp] = e.transposed ? b[mp * nn_ + m] : b[m * nn_ + mp];
        return out;
      }
    throw Error(ErrorCode::DimensionMismatch, "boxes are not in each other's interaction list");
  }

  /// Writes the kernel blocks to a versioned binary sidecar.
  void save_cache(const std::string& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(os), ErrorCode::IoError, "cannot open cache file for writing: " + path);
    os.write("RTFM", 4);
    write_u32(os, kCacheVersion);
    write_u64(os, cache_key());
    write_u32(os, static_cast<std::uint32_t>(interp_.order()));
    write_u32(os, static_cast<std::uint32_t>(grid_.nx));
    write_u32(os, static_cast<std::uint32_t>(tree_.leaf_level()));
    write_u32(os, static_cast<std::uint32_t>(near_mode_));
    for (const auto* pool : {&m2l_pool_, &near_pool_, &offsets_}) {
      write_u64(os, pool->size());
      for (double v : *pool) write_f64(os, v);
    }
    require(static_cast<bool>(os), ErrorCode::IoError, "failed writing cache file: " + path);
  }

  /// Digest of everything the cached kernel values depend on.
  std::uint64_t cache_key() const {
    std::uint64_t h = 1469598103934665603ULL;
    const auto mix = [&h](std::uint64_t v) {
      for (int b = 0; b < 8; ++b) {
        h ^= (v >> (8 * b)) & 0xffU;
        h *= 1099511628211ULL;
      }
    };
    mix(grid_.nx);
    mix(kernel_.medium().fingerprint());
    mix(static_cast<std::uint64_t>(kernel_.strategy()));
    mix(static_cast<std::uint64_t>(interp_.order()));
    mix(leaf_cap_);
    return h;
  }

 private:
  struct M2LEntry {
    std::uint32_t source;
    std::size_t block;
    bool transposed;
  };
  struct NearEntry {
    std::uint32_t source;
    std::size_t offset;
    bool transposed;
  };
  enum class NearMode : std::uint32_t { OffsetTable = 0, Blocks = 1, OnTheFly = 2 };

  static int checked_order(int n) {
    require(n >= ChebInterp::kMinOrder && n <= ChebInterp::kMaxOrder, ErrorCode::OrderOutOfRange,
            "Chebyshev order must lie in [2, 16]");
    return n;
  }
  static std::size_t checked_cap(std::size_t cap, int n) {
    require(cap >= static_cast<std::size_t>(n * n), ErrorCode::CapTooSmall, "leaf capacity must be at least n^2");
    return cap;
  }

  Point cheb_point(int level, std::size_t box, std::size_t m) const {
    const Point c = FmmTree::center(level, box);
    const double a = FmmTree::half_width(level);
    const Point z = interp_.tensor_node(m);
    return {c.x + a * z.x, c.y + a * z.y};
  }

  void build_geometry() {
    const std::size_t n = grid_.size();
    const int leaf_level = tree_.leaf_level();
    source_scale_.resize(n);
    sx_.resize(n * n1_);
    sy_.resize(n * n1_);
    for (std::size_t leaf = 0; leaf < FmmTree::boxes(leaf_level); ++leaf) {
      const Point c = FmmTree::center(leaf_level, leaf);
      const double a = FmmTree::half_width(leaf_level);
      for (std::size_t s = tree_.leaf_begin(leaf); s < tree_.leaf_begin(leaf + 1); ++s) {
        const std::size_t i = tree_.order()[s];
        const Point p = grid_.nodes[i];
        source_scale_[s] = grid_.weights[i] * kernel_.medium().mu_s(p);
        interp_.node_weights((p.x - c.x) / a, std::span<double>(sx_.data() + s * n1_, n1_));
        interp_.node_weights((p.y - c.y) / a, std::span<double>(sy_.data() + s * n1_, n1_));
      }
    }
    // Child-to-parent 1-D interpolation, child nodes at (z + sign) / 2 in parent coordinates.
    for (int side = 0; side < 2; ++side) {
      const double sign = side == 0 ? -1.0 : 1.0;
      auto& mat = child_to_parent_[static_cast<std::size_t>(side)];
      mat.resize(n1_ * n1_);
      for (std::size_t mp = 0; mp < n1_; ++mp)
        for (std::size_t mc = 0; mc < n1_; ++mc)
          mat[mp * n1_ + mc] = interp_.s1(interp_.nodes()[mp], 0.5 * (interp_.nodes()[mc] + sign));
    }
  }

  void build_lists() {
    const int leaf_level = tree_.leaf_level();
    m2l_.resize(static_cast<std::size_t>(leaf_level) + 1);
    std::size_t pairs = 0;
    std::map<std::tuple<int, long, long>, std::size_t> by_offset;
    std::map<std::tuple<int, std::size_t, std::size_t>, std::size_t> by_pair;
    std::size_t blocks = 0;
    for (int l = 2; l <= leaf_level; ++l) {
      auto& lists = m2l_[static_cast<std::size_t>(l)];
      lists.resize(FmmTree::boxes(l));
      const long side = 1L << l;
      for (std::size_t t = 0; t < FmmTree::boxes(l); ++t)
        for (std::uint32_t s : tree_.interaction_list(l, t)) {
          ++pairs;
          M2LEntry e{s, 0, false};
          if (kernel_.translation_invariant()) {
            const long dx = static_cast<long>(s % side) - static_cast<long>(t % side);
            const long dy = static_cast<long>(s / side) - static_cast<long>(t / side);
            auto [it, fresh] = by_offset.try_emplace({l, dx, dy}, blocks);
            if (fresh) {
              block_owner_.push_back({l, t, s});
              ++blocks;
            }
            e.block = it->second;
          } else if (t < s) {
            e.block = blocks++;
            by_pair[{l, t, s}] = e.block;
            block_owner_.push_back({l, t, s});
          } else {
            // E/(2 pi r) is symmetric, so the (s, t) block serves transposed.
            auto it = by_pair.find({l, s, t});
            if (it == by_pair.end()) {
              e.block = blocks++;
              by_pair[{l, s, t}] = e.block;
              block_owner_.push_back({l, s, t});
            } else {
              e.block = it->second;
            }
            e.transposed = true;
          }
          lists[t].push_back(e);
        }
    }
    stats_.m2l_pairs = pairs;
  }

  void compute_m2l_blocks() {
    const std::size_t bsz = nn_ * nn_;
    m2l_pool_.assign(block_owner_.size() * bsz, 0.0);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t b = 0; b < block_owner_.size(); ++b) {
      const auto [l, t, s] = block_owner_[b];
      double* dst = m2l_pool_.data() + b * bsz;
      for (std::size_t m = 0; m < nn_; ++m) {
        const Point x = cheb_point(l, t, m);
        for (std::size_t mp = 0; mp < nn_; ++mp) dst[m * nn_ + mp] = kernel_.transfer(x, cheb_point(l, s, mp));
      }
    }
    stats_.kernel_evals += m2l_pool_.size();
  }

  void compute_near(std::size_t budget) {
    const std::size_t leaves = FmmTree::boxes(tree_.leaf_level());
    near_.assign(leaves, {});
    if (kernel_.translation_invariant()) {
      near_mode_ = NearMode::OffsetTable;
      const std::size_t nx = grid_.nx;
      const std::size_t width = 2 * nx - 1;
      offsets_.assign(width * width, 0.0);
      // Only offsets reachable inside adjacent leaves are needed.
      const double reach = 4.0 * FmmTree::half_width(tree_.leaf_level()) + grid_.h;
      for (std::size_t b = 0; b < width; ++b)
        for (std::size_t a = 0; a < width; ++a) {
          const double dp = static_cast<double>(a) - static_cast<double>(nx - 1);
          const double dq = static_cast<double>(b) - static_cast<double>(nx - 1);
          if ((dp == 0.0 && dq == 0.0) || std::abs(dp) * grid_.h > reach || std::abs(dq) * grid_.h > reach) continue;
          offsets_[b * width + a] = kernel_.transfer(grid_.nodes[0], grid_.nodes[0] + Point{dp * grid_.h, dq * grid_.h});
          ++stats_.kernel_evals;
        }
      for (std::size_t t = 0; t < leaves; ++t)
        for (std::uint32_t s : tree_.near_list(t)) near_[t].push_back({s, 0, false});
      return;
    }

    std::size_t total = 0;
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> offset_of;
    for (std::size_t t = 0; t < leaves; ++t)
      for (std::uint32_t s : tree_.near_list(t)) {
        if (t <= s) {
          offset_of[{t, s}] = total;
          total += tree_.leaf_count(t) * tree_.leaf_count(s);
        }
      }
    for (std::size_t t = 0; t < leaves; ++t)
      for (std::uint32_t s : tree_.near_list(t)) {
        if (t <= s) near_[t].push_back({s, offset_of.at({t, s}), false});
        else near_[t].push_back({s, offset_of.at({s, t}), true});
      }
    if (total * sizeof(double) > budget) {
      near_mode_ = NearMode::OnTheFly;
      return;
    }
    near_mode_ = NearMode::Blocks;
    near_pool_.assign(total, 0.0);
    std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> work;
    for (const auto& [key, off] : offset_of) work.emplace_back(key.first, key.second, off);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t k = 0; k < work.size(); ++k) {
      const auto [t, s, off] = work[k];
      fill_near_block(t, s, near_pool_.data() + off);
    }
    stats_.kernel_evals += total;
  }

  void fill_near_block(std::size_t t, std::size_t s, double* dst) const {
    const std::size_t bt = tree_.leaf_begin(t), ct = tree_.leaf_count(t);
    const std::size_t bs = tree_.leaf_begin(s), cs = tree_.leaf_count(s);
    for (std::size_t a = 0; a < ct; ++a) {
      const Point x = grid_.nodes[tree_.order()[bt + a]];
      for (std::size_t b = 0; b < cs; ++b) {
        const bool self = t == s && a == b;
        dst[a * cs + b] = self ? 0.0 : kernel_.transfer(x, grid_.nodes[tree_.order()[bs + b]]);
      }
    }
  }

  // P2M at the leaves, then M2M up to level 2.
  void upward(const std::vector<double>& w, std::vector<std::vector<double>>& up) const {
    const int leaf_level = tree_.leaf_level();
    auto& leaf_up = up[static_cast<std::size_t>(leaf_level)];
#pragma omp parallel for schedule(static)
    for (std::size_t leaf = 0; leaf < FmmTree::boxes(leaf_level); ++leaf) {
      double* dst = leaf_up.data() + leaf * nn_;
      for (std::size_t s = tree_.leaf_begin(leaf); s < tree_.leaf_begin(leaf + 1); ++s) {
        const double* wx = sx_.data() + s * n1_;
        const double* wy = sy_.data() + s * n1_;
        for (std::size_t m2 = 0; m2 < n1_; ++m2) {
          const double f = w[s] * wy[m2];
          for (std::size_t m1 = 0; m1 < n1_; ++m1) dst[m1 + n1_ * m2] += f * wx[m1];
        }
      }
    }
    for (int l = leaf_level - 1; l >= 2; --l) {
      const auto& child = up[static_cast<std::size_t>(l + 1)];
      auto& parent = up[static_cast<std::size_t>(l)];
      const std::size_t side = std::size_t{1} << l;
#pragma omp parallel for schedule(static)
      for (std::size_t p = 0; p < FmmTree::boxes(l); ++p) {
        const std::size_t px = p % side, py = p / side;
        for (std::size_t q = 0; q < 4; ++q) {
          const std::size_t qx = q & 1U, qy = q >> 1U;
          const std::size_t c = (2 * py + qy) * (2 * side) + 2 * px + qx;
          apply_tensor(child_to_parent_[qx], child_to_parent_[qy], child.data() + c * nn_, parent.data() + p * nn_,
                       false);
        }
      }
    }
  }

  void translate(const std::vector<std::vector<double>>& up, std::vector<std::vector<double>>& down) const {
    const std::size_t bsz = nn_ * nn_;
    for (int l = 2; l <= tree_.leaf_level(); ++l) {
      const auto& src = up[static_cast<std::size_t>(l)];
      auto& dst = down[static_cast<std::size_t>(l)];
      const auto& lists = m2l_[static_cast<std::size_t>(l)];
#pragma omp parallel for schedule(dynamic, 4)
      for (std::size_t t = 0; t < lists.size(); ++t) {
        double* psi = dst.data() + t * nn_;
        for (const auto& e : lists[t]) {
          const double* blk = m2l_pool_.data() + e.block * bsz;
          const double* wsrc = src.data() + e.source * nn_;
          if (!e.transposed) {
            for (std::size_t m = 0; m < nn_; ++m) {
              const double* row = blk + m * nn_;
              double acc = 0.0;
              for (std::size_t mp = 0; mp < nn_; ++mp) acc += row[mp] * wsrc[mp];
              psi[m] += acc;
            }
          } else {
            for (std::size_t mp = 0; mp < nn_; ++mp) {
              const double* row = blk + mp * nn_;
              const double f = wsrc[mp];
              for (std::size_t m = 0; m < nn_; ++m) psi[m] += row[m] * f;
            }
          }
        }
      }
    }
  }

  // L2L from level 2 down to the leaves.
  void downward(std::vector<std::vector<double>>& down) const {
    for (int l = 2; l < tree_.leaf_level(); ++l) {
      const auto& parent = down[static_cast<std::size_t>(l)];
      auto& child = down[static_cast<std::size_t>(l + 1)];
      const std::size_t side = std::size_t{1} << (l + 1);
#pragma omp parallel for schedule(static)
      for (std::size_t c = 0; c < FmmTree::boxes(l + 1); ++c) {
        const std::size_t cx = c % side, cy = c / side;
        const std::size_t p = (cy / 2) * (side / 2) + cx / 2;
        apply_tensor(child_to_parent_[cx & 1U], child_to_parent_[cy & 1U], parent.data() + p * nn_,
                     child.data() + c * nn_, true);
      }
    }
  }

  // L2P.
  void evaluate_far(const std::vector<double>& leaf_down, std::vector<double>& acc) const {
    const int leaf_level = tree_.leaf_level();
#pragma omp parallel for schedule(static)
    for (std::size_t leaf = 0; leaf < FmmTree::boxes(leaf_level); ++leaf) {
      const double* psi = leaf_down.data() + leaf * nn_;
      for (std::size_t s = tree_.leaf_begin(leaf); s < tree_.leaf_begin(leaf + 1); ++s) {
        const double* wx = sx_.data() + s * n1_;
        const double* wy = sy_.data() + s * n1_;
        double sum = 0.0;
        for (std::size_t m2 = 0; m2 < n1_; ++m2) {
          double row = 0.0;
          for (std::size_t m1 = 0; m1 < n1_; ++m1) row += wx[m1] * psi[m1 + n1_ * m2];
          sum += wy[m2] * row;
        }
        acc[s] += sum;
      }
    }
  }

  void near_field(const std::vector<double>& w, std::vector<double>& acc) const {
    const std::size_t leaves = FmmTree::boxes(tree_.leaf_level());
    const std::size_t nx = grid_.nx;
    const std::size_t width = 2 * nx - 1;
    std::uint64_t evals = 0;
#pragma omp parallel for schedule(dynamic, 4) reduction(+ : evals)
    for (std::size_t t = 0; t < leaves; ++t) {
      const std::size_t bt = tree_.leaf_begin(t), ct = tree_.leaf_count(t);
      for (const auto& e : near_[t]) {
        const std::size_t bs = tree_.leaf_begin(e.source), cs = tree_.leaf_count(e.source);
        switch (near_mode_) {
          case NearMode::OffsetTable:
            for (std::size_t a = 0; a < ct; ++a) {
              const std::size_t i = tree_.order()[bt + a];
              const std::size_t pi = i % nx, qi = i / nx;
              const double* base = offsets_.data() + (nx - 1 - qi) * width + (nx - 1 - pi);
              double sum = 0.0;
              for (std::size_t b = 0; b < cs; ++b) {
                const std::size_t j = tree_.order()[bs + b];
                sum += base[(j / nx) * width + j % nx] * w[bs + b];
              }
              acc[bt + a] += sum;
            }
            break;
          case NearMode::Blocks: {
            const double* blk = near_pool_.data() + e.offset;
            if (!e.transposed) {
              for (std::size_t a = 0; a < ct; ++a) {
                const double* row = blk + a * cs;
                double sum = 0.0;
                for (std::size_t b = 0; b < cs; ++b) sum += row[b] * w[bs + b];
                acc[bt + a] += sum;
              }
            } else {
              for (std::size_t b = 0; b < cs; ++b) {
                const double* row = blk + b * ct;
                const double f = w[bs + b];
                for (std::size_t a = 0; a < ct; ++a) acc[bt + a] += row[a] * f;
              }
            }
            break;
          }
          case NearMode::OnTheFly:
            for (std::size_t a = 0; a < ct; ++a) {
              const Point x = grid_.nodes[tree_.order()[bt + a]];
              double sum = 0.0;
              for (std::size_t b = 0; b < cs; ++b) {
                if (t == e.source && a == b) continue;
                sum += kernel_.transfer(x, grid_.nodes[tree_.order()[bs + b]]) * w[bs + b];
                ++evals;
              }
              acc[bt + a] += sum;
            }
            break;
        }
      }
    }
    stats_.kernel_evals += evals;
  }

  // dst += (Ax (x) Ay) src, or its transpose.
  void apply_tensor(const std::vector<double>& ax, const std::vector<double>& ay, const double* src, double* dst,
                    bool transpose) const {
    double tmp[ChebInterp::kMaxOrder * ChebInterp::kMaxOrder];
    const std::size_t n = n1_;
    for (std::size_t r2 = 0; r2 < n; ++r2)
      for (std::size_t o1 = 0; o1 < n; ++o1) {
        double sum = 0.0;
        for (std::size_t i1 = 0; i1 < n; ++i1)
          sum += (transpose ? ax[i1 * n + o1] : ax[o1 * n + i1]) * src[i1 + n * r2];
        tmp[o1 + n * r2] = sum;
      }
    for (std::size_t o2 = 0; o2 < n; ++o2)
      for (std::size_t o1 = 0; o1 < n; ++o1) {
        double sum = 0.0;
        for (std::size_t i2 = 0; i2 < n; ++i2)
          sum += (transpose ? ay[i2 * n + o2] : ay[o2 * n + i2]) * tmp[o1 + n * i2];
        dst[o1 + n * o2] += sum;
      }
  }

  void load_cache(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(static_cast<bool>(is), ErrorCode::IoError, "cannot open cache file: " + path);
    char magic[4] = {};
    is.read(magic, 4);
    require(std::memcmp(magic, "RTFM", 4) == 0, ErrorCode::CacheMismatch, "not an FMM cache file: " + path);
    require(read_u32(is) == kCacheVersion, ErrorCode::CacheMismatch, "unsupported cache version");
    require(read_u64(is) == cache_key(), ErrorCode::CacheMismatch, "cache key does not match grid, medium and order");
    require(read_u32(is) == static_cast<std::uint32_t>(interp_.order()), ErrorCode::CacheMismatch, "order mismatch");
    require(read_u32(is) == grid_.nx, ErrorCode::CacheMismatch, "grid mismatch");
    require(read_u32(is) == static_cast<std::uint32_t>(tree_.leaf_level()), ErrorCode::CacheMismatch, "tree mismatch");
    const auto mode = static_cast<NearMode>(read_u32(is));
    std::vector<double>* pools[] = {&m2l_pool_, &near_pool_, &offsets_};
    for (auto* pool : pools) {
      const std::uint64_t count = read_u64(is);
      require(count < (std::uint64_t{1} << 36), ErrorCode::CacheMismatch, "corrupt cache size");
      pool->resize(count);
      for (auto& v : *pool) v = read_f64(is);
    }
    require(static_cast<bool>(is), ErrorCode::CacheMismatch, "truncated cache file: " + path);
    require(m2l_pool_.size() == block_owner_.size() * nn_ * nn_, ErrorCode::CacheMismatch, "M2L block count mismatch");

    // Rebuild the near lists against the loaded pools.
    const std::size_t budget = mode == NearMode::OnTheFly ? 0 : std::numeric_limits<std::size_t>::max();
    std::vector<double> near_keep = std::move(near_pool_);
    std::vector<double> offsets_keep = std::move(offsets_);
    const auto evals_before = stats_.kernel_evals;
    compute_near_lists_only(budget);
    stats_.kernel_evals = evals_before;
    near_pool_ = std::move(near_keep);
    offsets_ = std::move(offsets_keep);
    require(near_mode_ == mode, ErrorCode::CacheMismatch, "near-field layout mismatch");
  }

  void compute_near_lists_only(std::size_t budget) {
    const std::size_t leaves = FmmTree::boxes(tree_.leaf_level());
    near_.assign(leaves, {});
    if (kernel_.translation_invariant()) {
      near_mode_ = NearMode::OffsetTable;
      for (std::size_t t = 0; t < leaves; ++t)
        for (std::uint32_t s : tree_.near_list(t)) near_[t].push_back({s, 0, false});
      return;
    }
    std::size_t total = 0;
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> offset_of;
    for (std::size_t t = 0; t < leaves; ++t)
      for (std::uint32_t s : tree_.near_list(t))
        if (t <= s) {
          offset_of[{t, s}] = total;
          total += tree_.leaf_count(t) * tree_.leaf_count(s);
        }
    for (std::size_t t = 0; t < leaves; ++t)
      for (std::uint32_t s : tree_.near_list(t)) {
        if (t <= s) near_[t].push_back({s, offset_of.at({t, s}), false});
        else near_[t].push_back({s, offset_of.at({s, t}), true});
      }
    near_mode_ = budget == 0 ? NearMode::OnTheFly : NearMode::Blocks;
  }

  static void write_u32(std::ostream& os, std::uint32_t v) { write_le(os, v); }
  static void write_u64(std::ostream& os, std::uint64_t v) { write_le(os, v); }
  static void write_f64(std::ostream& os, double v) { write_le(os, std::bit_cast<std::uint64_t>(v)); }
  template <class T>
  static void write_le(std::ostream& os, T v) {
    unsigned char bytes[sizeof(T)];
    for (std::size_t b = 0; b < sizeof(T); ++b) bytes[b] = static_cast<unsigned char>((v >> (8 * b)) & 0xffU);
    os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
  }
  template <class T>
  static T read_le(std::istream& is) {
    unsigned char bytes[sizeof(T)] = {};
    is.read(reinterpret_cast<char*>(bytes), sizeof(T));
    T v = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) v |= static_cast<T>(bytes[b]) << (8 * b);
    return v;
  }
  static std::uint32_t read_u32(std::istream& is) { return read_le<std::uint32_t>(is); }
  static std::uint64_t read_u64(std::istream& is) { return read_le<std::uint64_t>(is); }
  static double read_f64(std::istream& is) { return std::bit_cast<double>(read_le<std::uint64_t>(is)); }

  Grid2D grid_;
  KernelEval kernel_;
  SelfContribution sc_;
  ChebInterp interp_;
  std::size_t leaf_cap_;
  FmmTree tree_;
  std::size_t n1_ = 0;
  std::size_t nn_ = 0;

  std::vector<double> source_scale_;  // leaf order
  std::vector<double> sx_, sy_;       // leaf order, n per source
  std::array<std::vector<double>, 2> child_to_parent_;

  std::vector<std::vector<std::vector<M2LEntry>>> m2l_;
  std::vector<std::tuple<int, std::size_t, std::size_t>> block_owner_;
  std::vector<double> m2l_pool_;

  NearMode near_mode_ = NearMode::OnTheFly;
  std::vector<std::vector<NearEntry>> near_;
  std::vector<double> near_pool_;
  std::vector<double> offsets_;

  mutable FmmStats stats_;
};

}  // namespace raysolve
