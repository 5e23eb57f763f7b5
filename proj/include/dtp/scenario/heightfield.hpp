#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "dtp/core/geometry.hpp"
#include "dtp/core/grid.hpp"

namespace dtp {

/// Piecewise-constant terrain: each cell is a flat column of its height.
/// Terrain outside the lattice is ground level (0).
class HeightField {
 public:
  HeightField() = default;

  explicit HeightField(GridSpec grid, double fill = 0.0)
      : grid_(grid), heights_(grid.cell_count(), fill), min_heights_(grid.cell_count(), 0.0) {
    grid_.validate();
    if (fill < 0.0) throw ValidationError("heights must be non-negative");
  }

  const GridSpec& grid() const { return grid_; }
  const std::vector<double>& heights() const { return heights_; }
  const std::vector<double>& min_heights() const { return min_heights_; }

  double height(CellIndex c) const { return heights_[grid_.index(c)]; }
  double min_height(CellIndex c) const { return min_heights_[grid_.index(c)]; }

  void set(CellIndex c, double h, double h_min) {
    if (h_min < 0.0 || h < h_min) throw ValidationError("cell heights must satisfy h >= h_min >= 0");
    heights_[grid_.index(c)] = h;
    min_heights_[grid_.index(c)] = h_min;
  }

  double height_at(double x, double y) const {
    auto c = grid_.cell_of(x, y);
    return c ? heights_[grid_.index(*c)] : 0.0;
  }

  double max_height() const {
    double m = 0.0;
    for (double h : heights_) m = std::max(m, h);
    return m;
  }

  /// Raises every cell whose centre lies in [x0,x1)x[y0,y1) to `h`, with
  /// compaction floor `h * floor_fraction`.
  void add_box(double x0, double y0, double x1, double y1, double h, double floor_fraction = 0.5) {
    for (int iy = 0; iy < grid_.height; ++iy) {
      for (int ix = 0; ix < grid_.width; ++ix) {
        double cx = grid_.center_x(ix), cy = grid_.center_y(iy);
        if (cx >= x0 && cx < x1 && cy >= y0 && cy < y1) set({ix, iy}, h, h * floor_fraction);
      }
    }
  }

  bool valid() const {
    for (std::size_t i = 0; i < heights_.size(); ++i) {
      if (min_heights_[i] < 0.0 || heights_[i] < min_heights_[i]) return false;
    }
    return true;
  }

 private:
  GridSpec grid_;
  std::vector<double> heights_;
  std::vector<double> min_heights_;
};

inline double ground_truth_volume(const HeightField& hf) {
  double area = hf.grid().cell_size * hf.grid().cell_size;
  double v = 0.0;
  for (double h : hf.heights()) v += area * h;
  return v;
}

inline double compacted_height(double h, double h_min, double k) { return h_min + (h - h_min) * k; }

inline void apply_compaction(HeightField& hf, const std::vector<CellIndex>& cells, double k) {
  if (!(k > 0.0 && k <= 1.0)) throw ValidationError("compaction factor must be in (0, 1]");
  for (auto c : cells) hf.set(c, compacted_height(hf.height(c), hf.min_height(c), k), hf.min_height(c));
}

struct ScanGeometry {
  double start_angle = -kPi;
  double increment = kPi / 360.0;
  int beam_count = 361;
  double max_range = 30.0;

  void validate() const {
    if (beam_count < 1) throw ValidationError("beam count must be at least 1");
    if (!(increment > 0.0)) throw ValidationError("beam increment must be positive");
    if (!(max_range > 0.0)) throw ValidationError("max range must be positive");
  }

  double angle(int i) const { return start_angle + i * increment; }
  double no_return() const { return max_range + 1.0; }
};

/// Beam direction in the sensor frame: the scan plane is the sensor's y-z
/// plane, angle measured from +y toward +z.
inline Vec3 beam_direction(double angle) { return {0.0, std::cos(angle), std::sin(angle)}; }

/// Distance along a unit ray to the first terrain intersection, or
/// `max_range + 1` if there is none within range.
inline double raycast(const HeightField& hf, const Vec3& origin, const Vec3& dir, double max_range, double top) {
  const double miss = max_range + 1.0;
  auto below = [&](double t) {
    Vec3 p = origin + t * dir;
    return p.z() <= hf.height_at(p.x(), p.y());
  };
  const double step = hf.grid().cell_size / 4.0;
  double prev = 0.0;
  for (double t = step;; t += step) {
    t = std::min(t, max_range);
    if (dir.z() >= 0.0 && origin.z() + prev * dir.z() > top) return miss;
    if (below(t)) {
      double lo = prev, hi = t;
      while (hi - lo > 1e-3) {
        double mid = 0.5 * (lo + hi);
        (below(mid) ? hi : lo) = mid;
      }
      return 0.5 * (lo + hi);
    }
    if (t >= max_range) return miss;
    prev = t;
  }
}

inline std::vector<double> raycast_scan(const HeightField& hf, const Pose3D& sensor, const ScanGeometry& g) {
  g.validate();
  const Vec3 origin = sensor.translation;
  if (origin.z() < hf.height_at(origin.x(), origin.y())) throw ValidationError("sensor is below the terrain");
  const Mat3 r = sensor.rotation();
  const double top = hf.max_height();
  std::vector<double> out(static_cast<std::size_t>(g.beam_count));
  for (int i = 0; i < g.beam_count; ++i) {
    out[static_cast<std::size_t>(i)] = raycast(hf, origin, r * beam_direction(g.angle(i)), g.max_range, top);
  }
  return out;
}

}  // namespace dtp
