#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "needle/polytope.hpp"
#include "needle/types.hpp"

namespace needle {

enum class WeightKind { Constant, Linear, Quadratic };

// rho(x) = 1/2 x^T Q x + b^T x + c; the measure has density exp(-rho).
struct WeightSpec {
  WeightKind kind = WeightKind::Constant;
  Matrix3 Q = Matrix3::Zero();
  Point b = Point::Zero();
  double c = 0.0;

  static WeightSpec constant(double c);
  static WeightSpec linear(const Point& b, double c);
  static WeightSpec quadratic(const Matrix3& Q, const Point& b, double c);

  double operator()(const Point& x) const { return 0.5 * x.dot(Q * x) + b.dot(x) + c; }
  Point gradient(const Point& x) const { return Q * x + b; }
  bool is_constant() const { return Q.isZero(0.0) && b.isZero(0.0); }
};

struct WeightedDomain {
  Polytope body;
  WeightSpec rho;
  double kappa = 0.0;
  double n_param = kInf;

  int dim() const { return body.dim(); }
};

// Validates the weight and the admissible range of N.
WeightedDomain make_domain(Polytope body, WeightSpec rho = {}, double kappa = 0.0, double n_param = kInf);

struct DiscreteMeasure {
  int dim = 0;
  std::vector<Point> points;
  std::vector<double> weights;
  double spacing = 0.0;
  std::uint64_t seed = 0;

  std::size_t size() const { return points.size(); }
  double total_mass() const;
};

enum class SamplingStrategy { Grid, Quasirandom };

bool contains_point(const WeightedDomain& domain, const Point& x);
double diameter(const WeightedDomain& domain);

// Grid: cell-centered lattice anchored at the bounding-box corner; boundary
// cells are clipped against the polytope and the sample sits at the clipped
// centroid. Quasirandom: shifted Kronecker sequence, shift drawn from seed.
DiscreteMeasure sample_measure(const WeightedDomain& domain, SamplingStrategy strategy, double h,
                               std::uint64_t seed = 0);

struct RicciCertificate {
  bool holds = false;
  double margin = 0.0;    // certified infimum minus kappa
  double infimum = 0.0;   // certified lower bound on Ric_{mu,N}(v,v) over unit v
  bool exact = false;     // true when the bound is attained (N infinite)
};

RicciCertificate certify_ricci_bound(const WeightedDomain& domain);

// Throws InvalidN when N lies in [1, d) or N = d with a nonconstant weight.
void check_n_param(int dim, double n_param, const WeightSpec& rho);

}  // namespace needle
