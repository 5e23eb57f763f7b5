#pragma once

#include <algorithm>
#include <vector>

#include "dtp/core/geometry.hpp"
#include "dtp/core/grid.hpp"
#include "dtp/core/messages.hpp"

namespace dtp {

/// Running-mean surface estimate on a regular lattice.
class ReconstructionGrid {
 public:
  ReconstructionGrid() = default;
  explicit ReconstructionGrid(GridSpec grid) : grid_(grid), mean_(grid.cell_count(), 0.0), count_(grid.cell_count(), 0) {
    grid_.validate();
  }

  const GridSpec& grid() const { return grid_; }
  std::uint64_t skipped() const { return skipped_; }

  double height(CellIndex c) const { return std::max(0.0, mean_[grid_.index(c)]); }
  std::uint32_t count(CellIndex c) const { return count_[grid_.index(c)]; }

  void add(const Vec3& p) {
    auto c = grid_.cell_of(p.x(), p.y());
    if (!c) {
      ++skipped_;
      return;
    }
    auto i = grid_.index(*c);
    ++count_[i];
    mean_[i] += (p.z() - mean_[i]) / count_[i];
  }

  void clear() { *this = ReconstructionGrid(grid_); }

  const std::vector<double>& heights() const { return mean_; }
  const std::vector<std::uint32_t>& counts() const { return count_; }

 private:
  GridSpec grid_;
  std::vector<double> mean_;
  std::vector<std::uint32_t> count_;
  std::uint64_t skipped_ = 0;
};

inline void update_surface(ReconstructionGrid& grid, const std::vector<Vec3>& points) {
  for (const auto& p : points) grid.add(p);
}

struct VolumeEstimate {
  double volume = 0.0;
  double observed_fraction = 0.0;
};

/// Heights are clamped at ground level; only observed cells contribute.
inline VolumeEstimate estimate_volume(const ReconstructionGrid& grid) {
  const auto& g = grid.grid();
  VolumeEstimate v;
  std::size_t observed = 0;
  for (std::size_t i = 0; i < g.cell_count(); ++i) {
    if (grid.counts()[i] == 0) continue;
    ++observed;
    v.volume += g.cell_size * g.cell_size * std::max(0.0, grid.heights()[i]);
  }
  v.observed_fraction = g.cell_count() ? static_cast<double>(observed) / static_cast<double>(g.cell_count()) : 0.0;
  return v;
}

/// World points of all returns in a scan. `mount` maps sensor to vehicle
/// coordinates, `vehicle` maps vehicle to world coordinates.
inline std::vector<Vec3> scan_to_points(const LidarScan& scan, const Pose3D& vehicle, const RigidTransform& mount) {
  std::vector<Vec3> out;
  out.reserve(scan.ranges_mm.size());
  const Mat3 r = vehicle.rotation() * mount.rotation();
  const Vec3 t = vehicle.apply(mount.translation);
  for (std::size_t i = 0; i < scan.ranges_mm.size(); ++i) {
    if (scan.ranges_mm[i] == 0) continue;
    double a = scan.beam_angle(i);
    Vec3 d{0.0, std::cos(a), std::sin(a)};
    out.push_back(t + r * (d * (scan.ranges_mm[i] / 1000.0)));
  }
  return out;
}

/// Pass counts per cell, incremented when the footprint newly covers a cell.
class CoverageMap {
 public:
  CoverageMap() = default;
  CoverageMap(GridSpec grid, Footprint fp) : grid_(grid), fp_(fp), passes_(grid.cell_count(), 0) {}

  void update(const Pose3D& pose) {
    auto cells = footprint_cells(grid_, pose.translation.x(), pose.translation.y(), pose.yaw, fp_);
    for (auto c : tracker_.update(std::move(cells))) ++passes_[grid_.index(c)];
  }

  const std::vector<std::uint16_t>& passes() const { return passes_; }
  void clear() { *this = CoverageMap(grid_, fp_); }

 private:
  GridSpec grid_;
  Footprint fp_;
  FootprintTracker tracker_;
  std::vector<std::uint16_t> passes_;
};

}  // namespace dtp
