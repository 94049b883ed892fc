#pragma once

#include <vector>

#include "needle/types.hpp"

namespace needle {

// Closed half-space {x : normal . x <= offset} with unit normal.
struct HalfSpace {
  Point normal = Point::Zero();
  double offset = 0.0;

  double slack(const Point& x) const { return offset - normal.dot(x); }
};

// Bounded convex polytope in R^d (d <= 3) kept in both vertex and half-space
// form. The two forms are cross-checked on construction.
class Polytope {
 public:
  Polytope() = default;

  static Polytope from_vertices(int dim, const std::vector<Point>& points);
  static Polytope from_halfspaces(int dim, const std::vector<HalfSpace>& halfspaces);
  static Polytope interval(double a, double b);
  static Polytope box(int dim, const Point& lo, const Point& hi);
  static Polytope regular_polygon(int sides, double circumradius, const Point& center = Point::Zero(),
                                  double phase = 0.0);

  int dim() const { return dim_; }
  const std::vector<Point>& vertices() const { return vertices_; }
  const std::vector<HalfSpace>& facets() const { return facets_; }
  // Facet polygons (3D only), each a cyclically ordered vertex loop.
  const std::vector<std::vector<Point>>& faces() const { return faces_; }

  bool contains(const Point& x, double tol = 1e-12) const;
  double diameter() const;
  double volume() const { return volume_; }
  Point centroid() const { return centroid_; }
  Point lower() const { return lower_; }
  Point upper() const { return upper_; }

  // Homothety about the centroid.
  Polytope scaled_about_centroid(double factor) const;
  // Uniform scaling about the origin.
  Polytope scaled(double factor) const;

  // Parameter interval {s : p + s*dir in P}; false when the line misses P.
  bool clip_line(const Point& p, const Point& dir, double* s0, double* s1) const;

  // Measure and centroid of P intersected with the axis-aligned cube [lo, lo + h].
  double clip_cell(const Point& lo, double h, Point* centroid) const;

  // Largest violation max_k (normal_k . x - offset_k), negative inside.
  double max_violation(const Point& x) const;

 private:
  void finalize();
  void validate() const;

  int dim_ = 0;
  std::vector<Point> vertices_;
  std::vector<HalfSpace> facets_;
  std::vector<std::vector<Point>> faces_;
  double volume_ = 0.0;
  Point centroid_ = Point::Zero();
  Point lower_ = Point::Zero();
  Point upper_ = Point::Zero();
};

// Planar convex polygon helpers shared with set-neighborhood computations.
std::vector<Point> clip_polygon(const std::vector<Point>& poly, const HalfSpace& hs);
double polygon_area(const std::vector<Point>& poly, Point* centroid = nullptr);

// Convex polyhedron as a list of planar faces.
using FaceList = std::vector<std::vector<Point>>;
FaceList clip_polyhedron(const FaceList& faces, const HalfSpace& hs);
double polyhedron_volume(const FaceList& faces, Point* centroid = nullptr);
FaceList cube_faces(const Point& lo, double h);

}  // namespace needle
