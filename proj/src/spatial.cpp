#include "needle/spatial.hpp"

#include <algorithm>
#include <cmath>

namespace needle {

double typical_spacing(const std::vector<Point>& points) {
  if (points.empty()) return 1.0;
  Point lo = Point::Constant(kInf);
  Point hi = Point::Constant(-kInf);
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  int dim = 0;
  double vol = 1.0;
  for (int k = 0; k < 3; ++k)
    if (hi[k] - lo[k] > 0) {
      ++dim;
      vol *= hi[k] - lo[k];
    }
  if (dim == 0) return 1.0;
  return std::pow(vol / static_cast<double>(points.size()), 1.0 / dim);
}

GridIndex::GridIndex(const std::vector<Point>& points, double cell_size, int per_cell) : points_(&points) {
  if (points.empty()) return;
  origin_ = Point::Constant(kInf);
  Point hi = Point::Constant(-kInf);
  int dim = 0;
  for (const auto& p : points) {
    origin_ = origin_.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  for (int k = 0; k < 3; ++k)
    if (hi[k] > origin_[k]) ++dim;
  size_ = cell_size > 0 ? cell_size
                        : typical_spacing(points) * std::pow(static_cast<double>(std::max(1, per_cell)), 1.0 / std::max(1, dim));
  if (!(size_ > 0) || !std::isfinite(size_)) size_ = 1.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto c = coord(points[i]);
    const auto k = key(c);
    auto [it, fresh] = lookup_.emplace(k, static_cast<int>(cells_.size()));
    if (fresh) {
      cells_.emplace_back();
      cells_.back().lo = points[i];
      cells_.back().hi = points[i];
    }
    Cell& cell = cells_[it->second];
    cell.members.push_back(static_cast<int>(i));
    cell.lo = cell.lo.cwiseMin(points[i]);
    cell.hi = cell.hi.cwiseMax(points[i]);
  }
}

std::array<long, 3> GridIndex::coord(const Point& x) const {
  std::array<long, 3> c{};
  for (int k = 0; k < 3; ++k) c[k] = static_cast<long>(std::floor((x[k] - origin_[k]) / size_));
  return c;
}

std::uint64_t GridIndex::key(const std::array<long, 3>& c) const {
  std::uint64_t k = 0;
  for (int d = 0; d < 3; ++d) k = k * 2097169ULL + static_cast<std::uint64_t>(c[d] + (1L << 20));
  return k;
}

std::vector<int> GridIndex::within(const Point& x, double r) const {
  std::vector<int> out;
  if (!points_) return out;
  const auto lo = coord(x - Point::Constant(r));
  const auto hi = coord(x + Point::Constant(r));
  const double r2 = r * r;
  double span = 1.0;
  for (int k = 0; k < 3; ++k) span *= static_cast<double>(hi[k] - lo[k] + 1);
  if (span > static_cast<double>(cells_.size())) {
    for (const auto& cell : cells_) {
      if (cell.min_dist(x) > r) continue;
      for (int i : cell.members)
        if (((*points_)[i] - x).squaredNorm() <= r2) out.push_back(i);
    }
    std::sort(out.begin(), out.end());
    return out;
  }
  for (long a = lo[0]; a <= hi[0]; ++a)
    for (long b = lo[1]; b <= hi[1]; ++b)
      for (long c = lo[2]; c <= hi[2]; ++c) {
        auto it = lookup_.find(key({a, b, c}));
        if (it == lookup_.end()) continue;
        const Cell& cell = cells_[it->second];
        if (cell.min_dist(x) > r) continue;
        for (int i : cell.members)
          if (((*points_)[i] - x).squaredNorm() <= r2) out.push_back(i);
      }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace needle
