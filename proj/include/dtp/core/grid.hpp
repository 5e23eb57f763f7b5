#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "dtp/core/error.hpp"

namespace dtp {

struct CellIndex {
  int ix = 0;
  int iy = 0;

  auto operator<=>(const CellIndex&) const = default;
};

/// Regular lattice on the ENU ground plane. Cell (0,0) has its lower-left
/// corner at (origin_x, origin_y).
struct GridSpec {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double cell_size = 0.5;
  int width = 0;
  int height = 0;

  void validate() const {
    if (!(cell_size > 0.0)) throw ValidationError("cell_size must be positive");
    if (width < 0 || height < 0) throw ValidationError("grid dimensions must be non-negative");
  }

  std::size_t cell_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }

  std::optional<CellIndex> cell_of(double x, double y) const {
    double fx = std::floor((x - origin_x) / cell_size);
    double fy = std::floor((y - origin_y) / cell_size);
    if (fx < 0 || fy < 0 || fx >= width || fy >= height) return std::nullopt;
    return CellIndex{static_cast<int>(fx), static_cast<int>(fy)};
  }

  std::size_t index(CellIndex c) const {
    return static_cast<std::size_t>(c.iy) * static_cast<std::size_t>(width) + static_cast<std::size_t>(c.ix);
  }

  double center_x(int ix) const { return origin_x + (ix + 0.5) * cell_size; }
  double center_y(int iy) const { return origin_y + (iy + 0.5) * cell_size; }

  bool operator==(const GridSpec&) const = default;
};

/// Vehicle footprint: a rectangle centred `offset` metres ahead of the
/// reference point along the heading.
struct Footprint {
  double length = 4.0;
  double width = 2.5;
  double offset = 1.5;
};

/// Cells whose centres lie inside the footprint rectangle, sorted.
inline std::vector<CellIndex> footprint_cells(const GridSpec& g, double x, double y, double yaw, const Footprint& fp) {
  std::vector<CellIndex> out;
  double c = std::cos(yaw), s = std::sin(yaw);
  double cx = x + fp.offset * c, cy = y + fp.offset * s;
  double hl = fp.length / 2, hw = fp.width / 2;
  double rx = std::abs(c) * hl + std::abs(s) * hw;
  double ry = std::abs(s) * hl + std::abs(c) * hw;
  int ix0 = std::max(0, static_cast<int>(std::floor((cx - rx - g.origin_x) / g.cell_size)));
  int ix1 = std::min(g.width - 1, static_cast<int>(std::floor((cx + rx - g.origin_x) / g.cell_size)));
  int iy0 = std::max(0, static_cast<int>(std::floor((cy - ry - g.origin_y) / g.cell_size)));
  int iy1 = std::min(g.height - 1, static_cast<int>(std::floor((cy + ry - g.origin_y) / g.cell_size)));
  for (int ix = ix0; ix <= ix1; ++ix) {
    for (int iy = iy0; iy <= iy1; ++iy) {
      double dx = g.center_x(ix) - cx, dy = g.center_y(iy) - cy;
      double along = dx * c + dy * s;
      double across = -dx * s + dy * c;
      if (std::abs(along) <= hl && std::abs(across) <= hw) out.push_back({ix, iy});
    }
  }
  return out;
}

/// Tracks which cells the footprint currently covers and reports cells that
/// were not covered at the previous update.
class FootprintTracker {
 public:
  std::vector<CellIndex> update(std::vector<CellIndex> now_covered) {
    std::vector<CellIndex> entered;
    for (auto& c : now_covered) {
      if (!std::binary_search(covered_.begin(), covered_.end(), c)) entered.push_back(c);
    }
    covered_ = std::move(now_covered);
    return entered;
  }

  void reset() { covered_.clear(); }

 private:
  std::vector<CellIndex> covered_;  // sorted
};

}  // namespace dtp
