#include "needle/inequalities.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <utility>

#include <json.hpp>

#include "needle/error.hpp"
#include "needle/foliation.hpp"
#include "needle/parallel.hpp"
#include "needle/transport.hpp"

namespace needle {

SetSpec SetSpec::half_space(const Point& normal, double offset) {
  const double n = normal.norm();
  if (!(n > 0)) throw Error(ErrorCode::InvalidParams, "half-space normal must be nonzero");
  SetSpec s;
  s.kind = SetKind::HalfSpace;
  s.normal = normal / n;
  s.offset = offset / n;
  return s;
}

SetSpec SetSpec::box(const Point& lo, const Point& hi) {
  SetSpec s;
  s.kind = SetKind::Box;
  s.lo = lo;
  s.hi = hi;
  return s;
}

SetSpec SetSpec::ball(const Point& center, double radius) {
  if (!(radius >= 0)) throw Error(ErrorCode::InvalidParams, "ball radius must be nonnegative");
  SetSpec s;
  s.kind = SetKind::Ball;
  s.center = center;
  s.radius = radius;
  return s;
}

bool SetSpec::contains(const Point& x) const {
  switch (kind) {
    case SetKind::Empty:
      return false;
    case SetKind::HalfSpace:
      return normal.dot(x) <= offset;
    case SetKind::Box:
      return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
    case SetKind::Ball:
      return (x - center).norm() <= radius;
  }
  return false;
}

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<HalfSpace> box_halfspaces(int dim, const Point& lo, const Point& hi) {
  std::vector<HalfSpace> out;
  for (int k = 0; k < dim; ++k) {
    Point e = Point::Zero();
    e[k] = 1.0;
    out.push_back({e, hi[k]});
    out.push_back({-e, -lo[k]});
  }
  return out;
}

// Domain polygon in counterclockwise order.
std::vector<Point> domain_polygon(const Polytope& K) {
  std::vector<Point> v = K.vertices();
  const Point c = K.centroid();
  std::sort(v.begin(), v.end(), [&](const Point& a, const Point& b) {
    return std::atan2(a.y() - c.y(), a.x() - c.x()) < std::atan2(b.y() - c.y(), b.x() - c.x());
  });
  return v;
}

double segment_distance(const Point& x, const Point& a, const Point& b) {
  const Point ab = b - a;
  const double l2 = ab.squaredNorm();
  const double s = l2 > 0 ? std::clamp((x - a).dot(ab) / l2, 0.0, 1.0) : 0.0;
  return (x - (a + s * ab)).norm();
}

// Distance to a convex set C = S cap K. Planar sets are convex polygons or a
// disk clipped by K; 3D sets are handled by Dykstra
// projection onto the half-spaces and the ball.
class ConvexSet {
 public:
  ConvexSet(const WeightedDomain& domain, const SetSpec& set) : dim_(domain.dim()), set_(set) {
    const Polytope& K = domain.body;
    if (set.kind == SetKind::Empty) {
      empty_ = true;
      return;
    }
    halfspaces_ = K.facets();
    if (set.kind == SetKind::HalfSpace) halfspaces_.push_back({set.normal, set.offset});
    if (set.kind == SetKind::Box)
      for (const auto& hs : box_halfspaces(dim_, set.lo, set.hi)) halfspaces_.push_back(hs);
    if (dim_ == 1) {
      lo1_ = K.lower().x();
      hi1_ = K.upper().x();
      for (const auto& hs : halfspaces_) {
        if (hs.normal.x() > 0) hi1_ = std::min(hi1_, hs.offset / hs.normal.x());
        if (hs.normal.x() < 0) lo1_ = std::max(lo1_, hs.offset / hs.normal.x());
      }
      if (set.kind == SetKind::Ball) {
        lo1_ = std::max(lo1_, set.center.x() - set.radius);
        hi1_ = std::min(hi1_, set.center.x() + set.radius);
      }
      empty_ = !(hi1_ >= lo1_);
    } else if (dim_ == 2 && set.kind == SetKind::Ball) {
      // C = disk cap K. Its straight edges are the parts of K's edges inside the disk.
      const std::vector<Point> kp = domain_polygon(K);
      bool centre_in = K.contains(set.center, 0.0);
      double reach = kInf;
      for (std::size_t k = 0; k < kp.size(); ++k) {
        const Point& a = kp[k];
        const Point& b = kp[(k + 1) % kp.size()];
        reach = std::min(reach, segment_distance(set.center, a, b));
        const Point ab = b - a, ac = a - set.center;
        const double qa = ab.squaredNorm(), qb = 2 * ab.dot(ac), qc = ac.squaredNorm() - set.radius * set.radius;
        const double disc = qb * qb - 4 * qa * qc;
        if (qa <= 0 || disc <= 0) continue;
        const double s0 = std::max(0.0, (-qb - std::sqrt(disc)) / (2 * qa));
        const double s1 = std::min(1.0, (-qb + std::sqrt(disc)) / (2 * qa));
        if (s1 > s0) segments_.push_back({a + s0 * ab, a + s1 * ab});
      }
      disk_ = true;
      empty_ = !(centre_in || reach < set.radius);
    } else if (dim_ == 2) {
      std::vector<Point> poly = domain_polygon(K);
      for (std::size_t k = K.facets().size(); k < halfspaces_.size(); ++k) poly = clip_polygon(poly, halfspaces_[k]);
      poly_ = std::move(poly);
      empty_ = poly_.size() < 3 || polygon_area(poly_) <= 0.0;
    } else {
      empty_ = false;  // decided lazily; Dykstra reports distance regardless
    }
  }

  bool empty() const { return empty_; }

  // Signed in 1D and 2D (negative inside); plain distance in 3D.
  double distance(const Point& x) const {
    if (empty_) return kInf;
    if (dim_ == 1) {
      return std::max(lo1_ - x.x(), x.x() - hi1_);
    }
    if (disk_) return disk_distance(x);
    if (dim_ == 2) {
      bool inside = true;
      const std::size_t n = poly_.size();
      for (std::size_t k = 0; k < n && inside; ++k) {
        const Point& a = poly_[k];
        const Point& b = poly_[(k + 1) % n];
        if ((b.x() - a.x()) * (x.y() - a.y()) - (b.y() - a.y()) * (x.x() - a.x()) < 0) inside = false;
      }
      double best = kInf;
      for (std::size_t k = 0; k < n; ++k) best = std::min(best, segment_distance(x, poly_[k], poly_[(k + 1) % n]));
      return inside ? -best : best;
    }
    return std::max(0.0, dykstra(x));
  }

 private:
  // Inside, the depth is the smaller of the disk depth and the facet slacks.
  // Outside, the nearest point is the disk projection when it lies in K, or
  // else on one of the straight edges.
  double disk_distance(const Point& x) const {
    const Point r = x - set_.center;
    const double len = r.norm();
    double slack = set_.radius - len;
    for (const auto& hs : halfspaces_) slack = std::min(slack, hs.slack(x));
    if (slack >= 0) return -slack;
    double best = kInf;
    const Point p = len > set_.radius ? Point(set_.center + set_.radius / len * r) : x;
    bool p_in = true;
    for (const auto& hs : halfspaces_) p_in = p_in && hs.slack(p) >= -1e-12;
    if (p_in) best = (x - p).norm();
    for (const auto& [a, b] : segments_) best = std::min(best, segment_distance(x, a, b));
    return best;
  }

  double dykstra(const Point& x) const {
    const bool ball = set_.kind == SetKind::Ball;
    const std::size_t m = halfspaces_.size() + (ball ? 1 : 0);
    bool inside = !ball || (x - set_.center).norm() <= set_.radius;
    for (const auto& hs : halfspaces_) inside = inside && hs.slack(x) >= 0;
    if (inside) return 0.0;
    std::vector<Point> inc(m, Point::Zero());
    Point y = x;
    for (int it = 0; it < 20000; ++it) {
      const Point start = y;
      for (std::size_t k = 0; k < m; ++k) {
        const Point z = y + inc[k];
        Point p;
        if (k < halfspaces_.size()) {
          const auto& hs = halfspaces_[k];
          p = z - std::max(0.0, hs.normal.dot(z) - hs.offset) * hs.normal;
        } else {
          const Point r = z - set_.center;
          const double len = r.norm();
          p = len <= set_.radius ? z : Point(set_.center + set_.radius / len * r);
        }
        inc[k] = z - p;
        y = p;
      }
      if ((y - start).norm() < 1e-13) break;
    }
    bool feasible = !ball || (y - set_.center).norm() <= set_.radius * (1 + 1e-9) + 1e-12;
    for (const auto& hs : halfspaces_) feasible = feasible && hs.slack(y) >= -1e-9;
    return feasible ? (y - x).norm() : kInf;
  }

  int dim_;
  SetSpec set_;
  bool empty_ = false;
  std::vector<HalfSpace> halfspaces_;
  std::vector<Point> poly_;
  bool disk_ = false;
  std::vector<std::pair<Point, Point>> segments_;
  double lo1_ = 0.0, hi1_ = 0.0;
};

// Gauss-Legendre on [a, b] with 64 panels of 5 nodes.
double integrate_1d(const std::function<double(double)>& f, double a, double b) {
  if (!(b > a)) return 0.0;
  static const double x[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                              0.9061798459386640};
  static const double w[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665,
                              0.2369268850561891};
  const int panels = 64;
  const double h = (b - a) / panels;
  double s = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double m = a + (p + 0.5) * h;
    for (int k = 0; k < 5; ++k) s += w[k] * f(m + 0.5 * h * x[k]);
  }
  return 0.5 * h * s;
}

double cell_mass(const WeightedDomain& domain, const Point& lo, double s) {
  Point c;
  const double vol = domain.body.clip_cell(lo, s, &c);
  return vol > 0 ? vol * std::exp(-domain.rho(c)) : 0.0;
}

// Adaptive cell refinement: cells farther than their half-diagonal from the
// level set d = eps are classified whole; the rest are split down to `depth`.
double refined_mass(const WeightedDomain& domain, const ConvexSet& C, double eps, int depth, bool whole) {
  const Polytope& K = domain.body;
  const int d = K.dim();
  const Point lo = K.lower();
  const Point ext = K.upper() - lo;
  const double s0 = ext.head(d).maxCoeff() / 64.0;
  std::array<int, 3> n{1, 1, 1};
  for (int k = 0; k < d; ++k) n[k] = std::max(1, static_cast<int>(std::ceil(ext[k] / s0 - 1e-9)));
  const double half_diag = 0.5 * std::sqrt(static_cast<double>(d));
  std::function<double(const Point&, double, int)> rec = [&](const Point& corner, double s, int level) -> double {
    Point mid = corner;
    for (int k = 0; k < d; ++k) mid[k] += 0.5 * s;
    const double r = half_diag * s;
    if (K.max_violation(mid) > r) return 0.0;
    if (whole) return cell_mass(domain, corner, s);
    const double dc = C.distance(mid) - eps;
    if (dc > r) return 0.0;
    if (dc <= -r) return cell_mass(domain, corner, s);
    if (level == depth) {
      if (d == 2) {
        // The level set is nearly straight across a deepest cell; clip by its tangent line.
        const double q = 0.125 * s;
        Point g(C.distance(mid + Point(q, 0, 0)) - C.distance(mid - Point(q, 0, 0)),
                C.distance(mid + Point(0, q, 0)) - C.distance(mid - Point(0, q, 0)), 0.0);
        const double len = g.norm();
        if (len > 0) {
          g /= len;
          std::vector<Point> poly = {corner, corner + Point(s, 0, 0), corner + Point(s, s, 0), corner + Point(0, s, 0)};
          for (const auto& hs : K.facets()) poly = clip_polygon(poly, hs);
          poly = clip_polygon(poly, {g, g.dot(mid) - dc});
          if (poly.size() < 3) return 0.0;
          Point c;
          const double area = polygon_area(poly, &c);
          return area * std::exp(-domain.rho(c));
        }
      }
      Point c;
      const double vol = K.clip_cell(corner, s, &c);
      return vol > 0 && C.distance(c) <= eps ? vol * std::exp(-domain.rho(c)) : 0.0;
    }
    double sum = 0.0;
    const int children = 1 << d;
    for (int q = 0; q < children; ++q) {
      Point sub = corner;
      for (int k = 0; k < d; ++k)
        if (q >> k & 1) sub[k] += 0.5 * s;
      sum += rec(sub, 0.5 * s, level + 1);
    }
    return sum;
  };
  const int cells = n[0] * n[1] * n[2];
  std::vector<double> part(cells, 0.0);
  parallel_for(cells, [&](std::size_t idx) {
    const int i = static_cast<int>(idx) % n[0];
    const int j = static_cast<int>(idx) / n[0] % n[1];
    const int k = static_cast<int>(idx) / (n[0] * n[1]);
    Point corner = lo;
    corner.x() += i * s0;
    if (d > 1) corner.y() += j * s0;
    if (d > 2) corner.z() += k * s0;
    part[idx] = rec(corner, s0, 0);
  });
  double total = 0.0;
  for (double v : part) total += v;
  return total;
}

}  // namespace

SetMass set_mass(const WeightedDomain& domain, const SetSpec& set, double eps, const SetMassOptions& options) {
  if (!(eps >= 0)) throw Error(ErrorCode::InvalidParams, "eps must be nonnegative");
  const ConvexSet C(domain, set);
  const int d = domain.dim();
  SetMass out;
  if (C.empty()) return out;
  if (d == 1) {
    auto w = [&](double t) { return std::exp(-domain.rho(Point(t, 0, 0))); };
    const double a = domain.body.lower().x(), b = domain.body.upper().x();
    const double total = integrate_1d(w, a, b);
    // The set is an interval inside [a, b]; distances from the ends recover it.
    const double s0 = a + std::max(0.0, C.distance(Point(a, 0, 0)));
    const double s1 = b - std::max(0.0, C.distance(Point(b, 0, 0)));
    const double lo = std::max(a, s0 - eps), hi = std::min(b, s1 + eps);
    out.value = integrate_1d(w, lo, hi) / total;
    return out;
  }
  if (d == 3 || options.monte_carlo) {
    out.monte_carlo = true;
    const Polytope& K = domain.body;
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<Point> pts;
    std::vector<double> ws;
    const Point lo = K.lower(), ext = K.upper() - K.lower();
    while (static_cast<int>(pts.size()) < options.samples) {
      Point x = lo;
      for (int k = 0; k < d; ++k) x[k] += U(rng) * ext[k];
      if (!K.contains(x, 0.0)) continue;
      pts.push_back(x);
      ws.push_back(std::exp(-domain.rho(x)));
    }
    std::vector<char> hit(pts.size());
    parallel_for(pts.size(), [&](std::size_t i) { hit[i] = C.distance(pts[i]) <= eps; });
    double sw = 0.0, sh = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      sw += ws[i];
      if (hit[i]) sh += ws[i];
    }
    out.value = sh / sw;
    double var = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double r = (hit[i] ? 1.0 : 0.0) - out.value;
      var += ws[i] * ws[i] * r * r;
    }
    out.error = std::sqrt(var) / sw;
    return out;
  }
  const double total = refined_mass(domain, C, eps, options.depth, true);
  out.value = refined_mass(domain, C, eps, options.depth, false) / total;
  return out;
}

namespace {

// Solves the transport problem for recentred f and extracts the needles.
struct Decomposition {
  SignedData data;
  TransportPlan plan;
  LipschitzPotential potential;
  FoliationResult foliation;
};

Decomposition decompose(const WeightedDomain& domain, DiscreteMeasure m, std::vector<double> f) {
  Decomposition dec;
  dec.data = make_signed_data(std::move(m), std::move(f));
  const SplitAtoms atoms = split_signed(dec.data);
  dec.plan = solve_transportation(atoms.sources, atoms.sinks);
  dec.potential = recover_potential(dec.plan, dec.data);
  dec.foliation = foliate(dec.potential, dec.data.measure, domain, {}, &dec.plan);
  return dec;
}

// Integral of g along a needle by the trapezoid rule on its grid.
double needle_integral(const Needle& n, const TransportRay& ray, const std::function<double(const Point&)>& g) {
  double s = 0.0;
  for (std::size_t k = 1; k < n.t.size(); ++k) {
    const double a = g(ray.at(n.t[k - 1])) * n.density[k - 1];
    const double b = g(ray.at(n.t[k])) * n.density[k];
    s += 0.5 * (n.t[k] - n.t[k - 1]) * (a + b);
  }
  return s;
}

}  // namespace

InequalityVerdict poincare_check(const WeightedDomain& domain, const Expr& f, const PoincareOptions& options) {
  InequalityVerdict v;
  v.name = "poincare";
  v.orientation = "lhs<=rhs";
  v.tolerances["relative"] = options.tol;
  const DiscreteMeasure m = sample_measure(domain, SamplingStrategy::Grid, options.h);
  const std::size_t n = m.size();
  std::vector<double> fv(n), g2(n);
  parallel_for(n, [&](std::size_t i) {
    Point g;
    fv[i] = f.eval_grad(m.points[i], &g);
    g2[i] = g.squaredNorm();
  });
  double mass = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mass += m.weights[i];
    mean += fv[i] * m.weights[i];
  }
  mean /= mass;
  double f2 = 0.0, grad2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    fv[i] -= mean;
    f2 += fv[i] * fv[i] * m.weights[i];
    grad2 += g2[i] * m.weights[i];
  }
  const double D = diameter(domain);
  const double lambda =
      domain.kappa == 0.0 ? kPi * kPi / (D * D) : lambda_knd(domain.kappa, domain.n_param, D, options.search);
  v.lhs = lambda * f2;
  v.rhs = grad2;
  v.pass = v.lhs <= v.rhs * (1 + options.tol);
  v.status = v.pass ? "pass" : "fail";
  v.values["lambda"] = lambda;
  v.values["diameter"] = D;
  v.values["mean_removed"] = mean;
  v.values["int_f2"] = f2;
  v.values["int_grad2"] = grad2;
  v.values["ratio"] = f2 > 0 ? grad2 / f2 / lambda : kInf;
  v.values["mass"] = mass;

  if (options.needles && f2 > 0) {
    // Each needle of a CD(kappa, N) decomposition has spectral gap at least lambda.
    const Decomposition dec = decompose(domain, m, fv);
    DensityEstimator est(dec.foliation, dec.data.measure, domain);
    std::vector<int> ids;
    for (std::size_t r = 0; r < dec.foliation.rays.size(); ++r)
      if (dec.foliation.rays[r].members.size() >= 8) ids.push_back(static_cast<int>(r));
    std::vector<double> gaps(ids.size());
    parallel_for(ids.size(), [&](std::size_t k) { gaps[k] = spectral_gap_1d(est.estimate(ids[k]), 400); });
    v.needles.checked = static_cast<int>(ids.size());
    v.needles.worst = kInf;
    for (double g : gaps) {
      if (g >= lambda * (1 - options.tol)) ++v.needles.passed;
      v.needles.worst = std::min(v.needles.worst, g / lambda);
    }
  }
  return v;
}

InequalityVerdict buser_milman_check(const WeightedDomain& domain, const SetSpec& set, double eps, const Expr& f,
                                     const BuserOptions& options) {
  InequalityVerdict v;
  v.name = "buser_milman";
  v.orientation = "lhs>=rhs";
  v.tolerances["c_floor"] = options.c_floor;
  const RicciCertificate cert = certify_ricci_bound(make_domain(domain.body, domain.rho, 0.0, kInf));
  double R = options.radius;
  if (!(R > 0)) {
    const DiscreteMeasure m = sample_measure(domain, SamplingStrategy::Grid, options.h);
    std::vector<double> fv(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) fv[i] = f(m.points[i]);
    const Decomposition dec = decompose(domain, m, fv);
    const auto& u = dec.potential.values;
    const auto& w = dec.data.measure.weights;
    double mass = 0.0, mean = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      mass += w[i];
      mean += u[i] * w[i];
    }
    mean /= mass;
    double dev = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) dev += std::abs(u[i] - mean) * w[i];
    R = 2.0 * dev / mass;
  }
  const SetMass t = set_mass(domain, set, 0.0, options.mass);
  const SetMass te = set_mass(domain, set, eps, options.mass);
  const double shell = std::max(0.0, te.value - t.value);
  const double base = (eps / R) * t.value * (1 - t.value);
  v.lhs = shell;
  v.rhs = options.c_floor * base;
  v.values["t"] = t.value;
  v.values["mu_S_eps"] = te.value;
  v.values["R"] = R;
  v.values["eps"] = eps;
  v.values["mass_error"] = std::hypot(t.error, te.error);
  if (base > 0) v.values["c"] = shell / base;
  v.pass = base > 0 ? shell / base >= options.c_floor : true;
  if (!cert.holds) {
    v.pass = false;
    v.status = "uncertified";
  } else {
    v.status = v.pass ? "pass" : "fail";
  }
  return v;
}

InequalityVerdict isoperimetric_check(const WeightedDomain& domain, const SetSpec& set, double eps,
                                      const IsoOptions& options) {
  InequalityVerdict v;
  v.name = "isoperimetric";
  v.orientation = "lhs<=rhs";
  v.tolerances["absolute"] = options.tol;
  const SetMass t = set_mass(domain, set, 0.0, options.mass);
  const SetMass te = set_mass(domain, set, eps, options.mass);
  const double D = diameter(domain);
  double profile = t.value;
  if (t.value > 0 && t.value < 1 && eps > 0)
    profile = iso_profile(domain.kappa, domain.n_param, D, t.value, eps, options.search);
  v.lhs = profile;
  v.rhs = te.value;
  v.values["t"] = t.value;
  v.values["eps"] = eps;
  v.values["diameter"] = D;
  v.values["mass_error"] = std::hypot(t.error, te.error);
  v.pass = v.rhs >= v.lhs - options.tol;
  v.status = v.pass ? "conditional" : "fail";
  if (domain.kappa < 0 && domain.n_param < 0) v.values["exploratory"] = 1.0;
  return v;
}

InequalityVerdict four_functions_check(const WeightedDomain& domain, const Expr& f1, const Expr& f2, const Expr& f3,
                                       const Expr& f4, double alpha, double beta,
                                       const FourFunctionsOptions& options) {
  if (!(alpha > 0) || !(beta > 0)) throw Error(ErrorCode::InvalidParams, "alpha and beta must be positive");
  InequalityVerdict v;
  v.name = "four_functions";
  v.orientation = "lhs<=rhs";
  v.tolerances["relative"] = options.tol;
  const DiscreteMeasure m = sample_measure(domain, SamplingStrategy::Grid, options.h);
  const std::size_t n = m.size();
  const Expr* fs[4] = {&f1, &f2, &f3, &f4};
  std::vector<double> val[4];
  for (int k = 0; k < 4; ++k) {
    val[k].resize(n);
    for (std::size_t i = 0; i < n; ++i) val[k][i] = (*fs[k])(m.points[i]);
  }
  auto combine = [&](double a, double b) { return std::pow(a, alpha) * std::pow(b, beta); };
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 4; ++k)
      if (!(val[k][i] >= 0))
        throw Error(ErrorCode::HypothesisViolated, "f" + std::to_string(k + 1) + " is negative at sample " +
                                                       std::to_string(i));
    if (combine(val[0][i], val[1][i]) > combine(val[2][i], val[3][i]) * (1 + options.tol))
      throw Error(ErrorCode::HypothesisViolated, "pointwise hypothesis fails at sample " + std::to_string(i));
  }
  double I[4] = {0, 0, 0, 0};
  for (int k = 0; k < 4; ++k)
    for (std::size_t i = 0; i < n; ++i) I[k] += val[k][i] * m.weights[i];
  if (!(I[2] > 0)) throw Error(ErrorCode::InvalidParams, "f3 must have positive integral");
  const double lambda = I[0] / I[2];
  std::vector<double> g(n);
  double scale = 0.0, spread = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = val[0][i] - lambda * val[2][i];
    scale = std::max(scale, std::max(val[0][i], lambda * val[2][i]));
    spread = std::max(spread, std::abs(g[i]));
  }
  v.values["lambda"] = lambda;
  for (int k = 0; k < 4; ++k) v.values["int_f" + std::to_string(k + 1)] = I[k];

  if (spread > 1e-12 * scale) {
    const Decomposition dec = decompose(domain, m, g);
    const auto& fol = dec.foliation;
    DensityEstimator est(fol, dec.data.measure, domain, options.density);
    const std::size_t R = fol.rays.size();
    std::vector<std::array<double, 4>> J(R);
    parallel_for(R, [&](std::size_t r) {
      const auto& ray = fol.rays[r];
      if (ray.members.size() >= 8) {
        const Needle nd = est.estimate(static_cast<int>(r));
        for (int k = 0; k < 4; ++k)
          J[r][k] = needle_integral(nd, ray, [&](const Point& x) { return (*fs[k])(x); });
      } else {
        for (int k = 0; k < 4; ++k) {
          J[r][k] = 0.0;
          for (int i : ray.members) J[r][k] += val[k][i] * m.weights[i];
        }
      }
    });
    double worst = 0.0;
    double sum[4] = {0, 0, 0, 0};
    for (std::size_t r = 0; r < R; ++r) {
      const double a = combine(J[r][0], J[r][1]);
      const double b = combine(J[r][2], J[r][3]);
      ++v.needles.checked;
      if (a <= b * (1 + options.tol)) ++v.needles.passed;
      if (b > 0) worst = std::max(worst, a / b);
      for (int k = 0; k < 4; ++k) sum[k] += J[r][k];
    }
    v.needles.worst = worst;
    for (std::size_t i : fol.residual)
      for (int k = 0; k < 4; ++k) sum[k] += val[k][i] * m.weights[i];
    for (int k = 0; k < 4; ++k) v.values["needle_int_f" + std::to_string(k + 1)] = sum[k];
    v.values["residual_mass"] = fol.ledger.residual_mass;
    if (v.needles.passed < v.needles.checked)
      throw Error(ErrorCode::HypothesisViolated, std::to_string(v.needles.checked - v.needles.passed) +
                                                     " needles violate the one-dimensional inequality");
  }
  v.lhs = combine(I[0], I[1]);
  v.rhs = combine(I[2], I[3]);
  v.values["needle_conclusion_lhs"] = std::pow(lambda, alpha / beta) * I[1];
  v.values["needle_conclusion_rhs"] = I[3];
  v.pass = v.lhs <= v.rhs * (1 + options.tol);
  v.status = v.pass ? "pass" : "fail";
  return v;
}

std::string verdicts_json(const std::vector<InequalityVerdict>& verdicts) {
  auto num = [](double x) -> nlohmann::json {
    if (std::isfinite(x)) return x;
    return nullptr;
  };
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& v : verdicts) {
    nlohmann::json j;
    j["name"] = v.name;
    j["lhs"] = num(v.lhs);
    j["rhs"] = num(v.rhs);
    j["pass"] = v.pass;
    j["status"] = v.status;
    j["orientation"] = v.orientation;
    nlohmann::json tol = nlohmann::json::object();
    for (const auto& [k, x] : v.tolerances) tol[k] = num(x);
    j["tolerances"] = tol;
    nlohmann::json vals = nlohmann::json::object();
    for (const auto& [k, x] : v.values) vals[k] = num(x);
    j["values"] = vals;
    j["needles"] = {{"checked", v.needles.checked}, {"passed", v.needles.passed}, {"worst", num(v.needles.worst)}};
    arr.push_back(j);
  }
  return arr.dump(2) + "\n";
}

}  // namespace needle
