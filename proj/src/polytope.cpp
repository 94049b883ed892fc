#include "needle/polytope.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "needle/error.hpp"

namespace needle {
namespace {

double scale_of(const std::vector<Point>& pts) {
  double s = 0.0;
  for (const auto& p : pts) s = std::max(s, p.cwiseAbs().maxCoeff());
  return std::max(1.0, s);
}

double cross2(const Point& o, const Point& a, const Point& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

std::vector<Point> hull2d(std::vector<Point> pts, double tol) {
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  if (pts.size() < 3) return pts;
  std::vector<Point> h(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross2(h[k - 2], h[k - 1], pts[i]) <= tol) --k;
    h[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross2(h[k - 2], h[k - 1], pts[i]) <= tol) --k;
    h[k++] = pts[i];
  }
  h.resize(k - 1);
  return h;
}

// Orders coplanar points cyclically around their mean.
std::vector<Point> order_on_plane(std::vector<Point> pts, const Point& normal, double tol) {
  std::vector<Point> uniq;
  for (const auto& p : pts) {
    bool dup = false;
    for (const auto& q : uniq)
      if ((p - q).norm() <= tol) {
        dup = true;
        break;
      }
    if (!dup) uniq.push_back(p);
  }
  if (uniq.size() < 3) return uniq;
  Point c = Point::Zero();
  for (const auto& p : uniq) c += p;
  c /= static_cast<double>(uniq.size());
  Point e1 = normal.unitOrthogonal();
  Point e2 = normal.cross(e1);
  std::vector<std::pair<double, Point>> keyed;
  keyed.reserve(uniq.size());
  for (const auto& p : uniq) keyed.emplace_back(std::atan2((p - c).dot(e2), (p - c).dot(e1)), p);
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Point> out;
  out.reserve(keyed.size());
  for (auto& kp : keyed) out.push_back(kp.second);
  return out;
}

}  // namespace

std::vector<Point> clip_polygon(const std::vector<Point>& poly, const HalfSpace& hs) {
  std::vector<Point> out;
  const std::size_t n = poly.size();
  if (n == 0) return out;
  out.reserve(n + 2);
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = poly[i];
    const Point& b = poly[(i + 1) % n];
    const double sa = hs.slack(a);
    const double sb = hs.slack(b);
    if (sa >= 0) out.push_back(a);
    if ((sa >= 0) != (sb >= 0)) {
      const double t = sa / (sa - sb);
      out.push_back(a + t * (b - a));
    }
  }
  return out;
}

double polygon_area(const std::vector<Point>& poly, Point* centroid) {
  const std::size_t n = poly.size();
  double a2 = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point& p = poly[i];
    const Point& q = poly[(i + 1) % n];
    const double c = p.x() * q.y() - q.x() * p.y();
    a2 += c;
    cx += (p.x() + q.x()) * c;
    cy += (p.y() + q.y()) * c;
  }
  const double area = 0.5 * std::abs(a2);
  if (centroid) {
    if (std::abs(a2) > 0) {
      *centroid = Point(cx / (3.0 * a2), cy / (3.0 * a2), 0.0);
    } else {
      Point c = Point::Zero();
      for (const auto& p : poly) c += p;
      *centroid = n ? Point(c / static_cast<double>(n)) : Point(Point::Zero());
    }
  }
  return area;
}

FaceList cube_faces(const Point& lo, double h) {
  auto v = [&](int i, int j, int k) { return Point(lo.x() + i * h, lo.y() + j * h, lo.z() + k * h); };
  return {
      {v(0, 0, 0), v(0, 1, 0), v(1, 1, 0), v(1, 0, 0)}, {v(0, 0, 1), v(1, 0, 1), v(1, 1, 1), v(0, 1, 1)},
      {v(0, 0, 0), v(1, 0, 0), v(1, 0, 1), v(0, 0, 1)}, {v(0, 1, 0), v(0, 1, 1), v(1, 1, 1), v(1, 1, 0)},
      {v(0, 0, 0), v(0, 0, 1), v(0, 1, 1), v(0, 1, 0)}, {v(1, 0, 0), v(1, 1, 0), v(1, 1, 1), v(1, 0, 1)},
  };
}

FaceList clip_polyhedron(const FaceList& faces, const HalfSpace& hs) {
  FaceList out;
  std::vector<Point> cap;
  double scale = 1e-300;
  for (const auto& f : faces)
    for (const auto& p : f) scale = std::max(scale, p.cwiseAbs().maxCoeff());
  const double tol = 1e-12 * std::max(1.0, scale);
  for (const auto& f : faces) {
    auto clipped = clip_polygon(f, hs);
    for (const auto& p : clipped)
      if (std::abs(hs.slack(p)) <= tol) cap.push_back(p);
    if (clipped.size() >= 3) out.push_back(std::move(clipped));
  }
  auto ordered = order_on_plane(cap, hs.normal, tol);
  if (ordered.size() >= 3) out.push_back(std::move(ordered));
  return out;
}

double polyhedron_volume(const FaceList& faces, Point* centroid) {
  Point c0 = Point::Zero();
  std::size_t count = 0;
  for (const auto& f : faces)
    for (const auto& p : f) {
      c0 += p;
      ++count;
    }
  if (count == 0) {
    if (centroid) *centroid = Point::Zero();
    return 0.0;
  }
  c0 /= static_cast<double>(count);
  double vol = 0.0;
  Point acc = Point::Zero();
  for (const auto& f : faces) {
    for (std::size_t i = 1; i + 1 < f.size(); ++i) {
      const double v = std::abs((f[0] - c0).dot((f[i] - c0).cross(f[i + 1] - c0))) / 6.0;
      vol += v;
      acc += v * (c0 + f[0] + f[i] + f[i + 1]) / 4.0;
    }
  }
  if (centroid) *centroid = vol > 0 ? Point(acc / vol) : c0;
  return vol;
}

Polytope Polytope::from_vertices(int dim, const std::vector<Point>& points) {
  if (dim < 1 || dim > 3) throw Error(ErrorCode::InvalidDomain, "dimension must be 1, 2 or 3");
  if (points.empty()) throw Error(ErrorCode::InvalidDomain, "no vertices");
  for (const auto& p : points) {
    if (!p.allFinite()) throw Error(ErrorCode::InvalidDomain, "non-finite vertex");
    for (int k = dim; k < 3; ++k)
      if (p[k] != 0.0) throw Error(ErrorCode::InvalidDomain, "vertex has coordinates beyond dim");
  }
  const double tol = 1e-10 * scale_of(points);
  Polytope P;
  P.dim_ = dim;
  if (dim == 1) {
    double lo = kInf;
    double hi = -kInf;
    for (const auto& p : points) {
      lo = std::min(lo, p.x());
      hi = std::max(hi, p.x());
    }
    if (!(hi - lo > tol)) throw Error(ErrorCode::InvalidDomain, "interval has empty interior");
    P.vertices_ = {Point(lo, 0, 0), Point(hi, 0, 0)};
    P.facets_ = {{Point(-1, 0, 0), -lo}, {Point(1, 0, 0), hi}};
  } else if (dim == 2) {
    auto h = hull2d(points, tol * tol);
    if (h.size() < 3) throw Error(ErrorCode::InvalidDomain, "polygon has empty interior");
    P.vertices_ = h;
    for (std::size_t i = 0; i < h.size(); ++i) {
      const Point& a = h[i];
      const Point& b = h[(i + 1) % h.size()];
      Point n(b.y() - a.y(), a.x() - b.x(), 0.0);
      n.normalize();
      P.facets_.push_back({n, n.dot(a)});
    }
  } else {
    const std::size_t m = points.size();
    std::vector<HalfSpace> planes;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 1; j < m; ++j)
        for (std::size_t k = j + 1; k < m; ++k) {
          Point n = (points[j] - points[i]).cross(points[k] - points[i]);
          const double len = n.norm();
          if (len <= tol * tol) continue;
          n /= len;
          double off = n.dot(points[i]);
          bool pos = false;
          bool neg = false;
          for (const auto& q : points) {
            const double s = n.dot(q) - off;
            if (s > tol) pos = true;
            if (s < -tol) neg = true;
          }
          if (pos && neg) continue;
          if (!pos && !neg) continue;
          if (pos) {
            n = -n;
            off = -off;
          }
          bool dup = false;
          for (const auto& pl : planes)
            if ((pl.normal - n).norm() <= 1e-9 && std::abs(pl.offset - off) <= tol) {
              dup = true;
              break;
            }
          if (!dup) planes.push_back({n, off});
        }
    if (planes.size() < 4) throw Error(ErrorCode::InvalidDomain, "polyhedron has empty interior");
    for (const auto& p : points) {
      std::vector<Point> on;
      for (const auto& pl : planes)
        if (std::abs(pl.slack(p)) <= tol) on.push_back(pl.normal);
      if (on.size() < 3) continue;
      Eigen::MatrixXd N(3, static_cast<Eigen::Index>(on.size()));
      for (std::size_t c = 0; c < on.size(); ++c) N.col(static_cast<Eigen::Index>(c)) = on[c];
      if (Eigen::FullPivLU<Eigen::MatrixXd>(N).rank() < 3) continue;
      bool dup = false;
      for (const auto& v : P.vertices_)
        if ((v - p).norm() <= tol) dup = true;
      if (!dup) P.vertices_.push_back(p);
    }
    P.facets_ = planes;
  }
  P.finalize();
  P.validate();
  return P;
}

Polytope Polytope::from_halfspaces(int dim, const std::vector<HalfSpace>& halfspaces) {
  if (dim < 1 || dim > 3) throw Error(ErrorCode::InvalidDomain, "dimension must be 1, 2 or 3");
  std::vector<HalfSpace> hs;
  for (auto h : halfspaces) {
    const double len = h.normal.norm();
    if (!(len > 0) || !std::isfinite(h.offset)) throw Error(ErrorCode::InvalidDomain, "degenerate half-space");
    for (int k = dim; k < 3; ++k)
      if (h.normal[k] != 0.0) throw Error(ErrorCode::InvalidDomain, "half-space normal beyond dim");
    h.normal /= len;
    h.offset /= len;
    hs.push_back(h);
  }
  if (hs.size() < static_cast<std::size_t>(dim + 1))
    throw Error(ErrorCode::InvalidDomain, "too few half-spaces for a bounded polytope");
  double scale = 1.0;
  for (const auto& h : hs) scale = std::max(scale, std::abs(h.offset));
  const double tol = 1e-10 * scale;
  std::vector<Point> verts;
  auto consider = [&](const Point& x) {
    for (const auto& h : hs)
      if (h.slack(x) < -tol) return;
    for (const auto& v : verts)
      if ((v - x).norm() <= tol) return;
    verts.push_back(x);
  };
  const std::size_t m = hs.size();
  if (dim == 1) {
    for (const auto& h : hs) consider(Point(h.offset / h.normal.x(), 0, 0));
  } else if (dim == 2) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 1; j < m; ++j) {
        Eigen::Matrix2d A;
        A << hs[i].normal.x(), hs[i].normal.y(), hs[j].normal.x(), hs[j].normal.y();
        if (std::abs(A.determinant()) < 1e-12) continue;
        Eigen::Vector2d x = A.inverse() * Eigen::Vector2d(hs[i].offset, hs[j].offset);
        consider(Point(x.x(), x.y(), 0));
      }
  } else {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 1; j < m; ++j)
        for (std::size_t k = j + 1; k < m; ++k) {
          Matrix3 A;
          A.row(0) = hs[i].normal.transpose();
          A.row(1) = hs[j].normal.transpose();
          A.row(2) = hs[k].normal.transpose();
          if (std::abs(A.determinant()) < 1e-12) continue;
          consider(A.inverse() * Point(hs[i].offset, hs[j].offset, hs[k].offset));
        }
  }
  if (verts.size() < static_cast<std::size_t>(dim + 1))
    throw Error(ErrorCode::InvalidDomain, "half-spaces do not bound a full-dimensional polytope");
  // An unbounded system yields a vertex hull with a closing facet that no
  // input half-space matches.
  Polytope P = from_vertices(dim, verts);
  for (const auto& f : P.facets_) {
    bool matched = false;
    for (const auto& h : hs)
      if ((h.normal - f.normal).norm() <= 1e-9 && std::abs(h.offset - f.offset) <= 1e-9 * scale) matched = true;
    if (!matched) throw Error(ErrorCode::InvalidDomain, "half-spaces do not describe a bounded polytope");
  }
  P.facets_ = hs;
  P.finalize();
  P.validate();
  return P;
}

Polytope Polytope::interval(double a, double b) { return from_vertices(1, {Point(a, 0, 0), Point(b, 0, 0)}); }

Polytope Polytope::box(int dim, const Point& lo, const Point& hi) {
  std::vector<Point> pts;
  for (int mask = 0; mask < (1 << dim); ++mask) {
    Point p = Point::Zero();
    for (int k = 0; k < dim; ++k) p[k] = (mask >> k) & 1 ? hi[k] : lo[k];
    pts.push_back(p);
  }
  return from_vertices(dim, pts);
}

Polytope Polytope::regular_polygon(int sides, double circumradius, const Point& center, double phase) {
  std::vector<Point> pts;
  for (int k = 0; k < sides; ++k) {
    const double a = phase + 2.0 * std::numbers::pi * k / sides;
    pts.emplace_back(center.x() + circumradius * std::cos(a), center.y() + circumradius * std::sin(a), 0.0);
  }
  return from_vertices(2, pts);
}

void Polytope::finalize() {
  lower_ = Point::Constant(kInf);
  upper_ = Point::Constant(-kInf);
  for (const auto& v : vertices_) {
    lower_ = lower_.cwiseMin(v);
    upper_ = upper_.cwiseMax(v);
  }
  for (int k = dim_; k < 3; ++k) lower_[k] = upper_[k] = 0.0;
  const double tol = 1e-10 * scale_of(vertices_);
  if (dim_ == 1) {
    volume_ = upper_.x() - lower_.x();
    centroid_ = 0.5 * (lower_ + upper_);
  } else if (dim_ == 2) {
    // Vertex loop is counterclockwise from the hull routine.
    volume_ = polygon_area(vertices_, &centroid_);
  } else {
    faces_.clear();
    for (const auto& f : facets_) {
      std::vector<Point> on;
      for (const auto& v : vertices_)
        if (std::abs(f.slack(v)) <= tol) on.push_back(v);
      faces_.push_back(order_on_plane(on, f.normal, tol));
    }
    volume_ = polyhedron_volume(faces_, &centroid_);
  }
}

void Polytope::validate() const {
  const double tol = 1e-9 * scale_of(vertices_);
  if (!(volume_ > 0)) throw Error(ErrorCode::InvalidDomain, "polytope has empty interior");
  for (const auto& v : vertices_) {
    int active = 0;
    for (const auto& f : facets_) {
      const double s = f.slack(v);
      if (s < -tol) throw Error(ErrorCode::InvalidDomain, "vertex violates a half-space");
      if (s <= tol) ++active;
    }
    if (active < dim_) throw Error(ErrorCode::InvalidDomain, "vertex is not extreme");
  }
  for (const auto& f : facets_) {
    int on = 0;
    for (const auto& v : vertices_)
      if (std::abs(f.slack(v)) <= tol) ++on;
    if (on < dim_) throw Error(ErrorCode::InvalidDomain, "half-space is not supporting");
  }
}

bool Polytope::contains(const Point& x, double tol) const {
  if (!x.allFinite()) return false;
  for (int k = dim_; k < 3; ++k)
    if (std::abs(x[k]) > tol) return false;
  for (const auto& f : facets_)
    if (f.slack(x) < -tol) return false;
  return true;
}

double Polytope::max_violation(const Point& x) const {
  double worst = -kInf;
  for (const auto& f : facets_) worst = std::max(worst, -f.slack(x));
  return worst;
}

double Polytope::diameter() const {
  double d = 0.0;
  for (std::size_t i = 0; i < vertices_.size(); ++i)
    for (std::size_t j = i + 1; j < vertices_.size(); ++j) d = std::max(d, dist(vertices_[i], vertices_[j]));
  return d;
}

Polytope Polytope::scaled_about_centroid(double factor) const {
  std::vector<Point> pts;
  for (const auto& v : vertices_) pts.push_back(centroid_ + factor * (v - centroid_));
  return from_vertices(dim_, pts);
}

Polytope Polytope::scaled(double factor) const {
  std::vector<Point> pts;
  for (const auto& v : vertices_) pts.push_back(factor * v);
  return from_vertices(dim_, pts);
}

bool Polytope::clip_line(const Point& p, const Point& dir, double* s0, double* s1) const {
  double lo = -kInf;
  double hi = kInf;
  for (const auto& f : facets_) {
    const double a = f.normal.dot(dir);
    const double b = f.slack(p);
    if (std::abs(a) < 1e-15) {
      if (b < -1e-12) return false;
      continue;
    }
    const double s = b / a;
    if (a > 0)
      hi = std::min(hi, s);
    else
      lo = std::max(lo, s);
  }
  if (lo > hi) return false;
  *s0 = lo;
  *s1 = hi;
  return true;
}

double Polytope::clip_cell(const Point& lo, double h, Point* centroid) const {
  const int corners = 1 << dim_;
  bool all_inside = true;
  std::vector<const HalfSpace*> cutting;
  for (const auto& f : facets_) {
    double smin = kInf;
    double smax = -kInf;
    for (int mask = 0; mask < corners; ++mask) {
      Point c = lo;
      for (int k = 0; k < dim_; ++k)
        if ((mask >> k) & 1) c[k] += h;
      const double s = f.slack(c);
      smin = std::min(smin, s);
      smax = std::max(smax, s);
    }
    if (smax <= 0) {
      if (centroid) *centroid = lo;
      return 0.0;
    }
    if (smin < 0) {
      all_inside = false;
      cutting.push_back(&f);
    }
  }
  if (all_inside) {
    if (centroid) {
      *centroid = lo;
      for (int k = 0; k < dim_; ++k) (*centroid)[k] += 0.5 * h;
    }
    return std::pow(h, dim_);
  }
  if (dim_ == 1) {
    double a = lo.x();
    double b = lo.x() + h;
    for (const auto* f : cutting) {
      const double t = f->offset / f->normal.x();
      if (f->normal.x() > 0)
        b = std::min(b, t);
      else
        a = std::max(a, t);
    }
    if (b <= a) return 0.0;
    if (centroid) *centroid = Point(0.5 * (a + b), 0, 0);
    return b - a;
  }
  if (dim_ == 2) {
    std::vector<Point> poly = {lo, lo + Point(h, 0, 0), lo + Point(h, h, 0), lo + Point(0, h, 0)};
    for (const auto* f : cutting) {
      poly = clip_polygon(poly, *f);
      if (poly.size() < 3) return 0.0;
    }
    return polygon_area(poly, centroid);
  }
  FaceList faces = cube_faces(lo, h);
  for (const auto* f : cutting) {
    faces = clip_polyhedron(faces, *f);
    if (faces.size() < 4) return 0.0;
  }
  return polyhedron_volume(faces, centroid);
}

}  // namespace needle
