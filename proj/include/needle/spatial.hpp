#pragma once

#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "needle/types.hpp"

namespace needle {

// Uniform bucketing of a point set. Each cell keeps the tight bounding box of
// its members so callers can bound distances from below.
class GridIndex {
 public:
  struct Cell {
    Point lo = Point::Zero();
    Point hi = Point::Zero();
    std::vector<int> members;  // ascending point indices

    double min_dist(const Point& x) const {
      return (x.cwiseMax(lo).cwiseMin(hi) - x).norm();
    }
  };

  GridIndex() = default;
  // cell_size <= 0 picks a size giving about `per_cell` points per cell.
  GridIndex(const std::vector<Point>& points, double cell_size, int per_cell = 16);

  const std::vector<Cell>& cells() const { return cells_; }
  double cell_size() const { return size_; }

  // Indices within distance r of x (inclusive), ascending.
  std::vector<int> within(const Point& x, double r) const;

 private:
  std::uint64_t key(const std::array<long, 3>& c) const;
  std::array<long, 3> coord(const Point& x) const;

  const std::vector<Point>* points_ = nullptr;
  Point origin_ = Point::Zero();
  double size_ = 1.0;
  std::vector<Cell> cells_;
  std::unordered_map<std::uint64_t, int> lookup_;
};

// Characteristic spacing (volume per point)^(1/d) of a point cloud, with d the
// number of axes along which the cloud has extent.
double typical_spacing(const std::vector<Point>& points);

}  // namespace needle
