#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "needle/expr.hpp"
#include "needle/geometry.hpp"
#include "needle/needles.hpp"

namespace needle {

// Subsets are always intersected with the domain.
enum class SetKind { Empty, HalfSpace, Box, Ball };

struct SetSpec {
  SetKind kind = SetKind::Empty;
  Point normal = Point::Zero();  // half-space {normal . x <= offset}
  double offset = 0.0;
  Point lo = Point::Zero();       // box
  Point hi = Point::Zero();
  Point center = Point::Zero();   // ball
  double radius = 0.0;

  static SetSpec empty() { return {}; }
  static SetSpec half_space(const Point& normal, double offset);
  static SetSpec box(const Point& lo, const Point& hi);
  static SetSpec ball(const Point& center, double radius);
  bool contains(const Point& x) const;
};

struct SetMassOptions {
  bool monte_carlo = false;  // forced on in 3D
  int samples = 200000;
  std::uint64_t seed = 0;
  int depth = 9;             // refinement levels below diameter/64 cells
};

struct SetMass {
  double value = 0.0;  // normalized by mu(domain)
  double error = 0.0;  // standard error for Monte Carlo, 0 otherwise
  bool monte_carlo = false;
};

// mu({x in K : d(x, S cap K) <= eps}) / mu(K); eps = 0 gives mu(S cap K).
SetMass set_mass(const WeightedDomain& domain, const SetSpec& set, double eps, const SetMassOptions& options = {});

struct NeedleSummary {
  int checked = 0;
  int passed = 0;
  double worst = 0.0;  // inequality-specific worst per-needle value
};

struct InequalityVerdict {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = false;
  std::string status;       // "pass", "fail", "conditional", "uncertified"
  std::string orientation;  // "lhs<=rhs" or "lhs>=rhs"
  std::map<std::string, double> tolerances;
  std::map<std::string, double> values;  // intermediate integrals
  NeedleSummary needles;
};

struct PoincareOptions {
  double h = 0.01;
  double tol = 1e-3;
  bool needles = false;  // decompose f and check each needle's spectral gap
  FamilySearch search;
};

// lambda * int f^2 <= int |grad f|^2 for f recentered to zero mean, with
// lambda = pi^2/D^2 when kappa = 0 and lambda_knd otherwise.
InequalityVerdict poincare_check(const WeightedDomain& domain, const Expr& f, const PoincareOptions& options = {});

struct BuserOptions {
  double h = 0.02;
  double c_floor = 0.1;
  double radius = 0.0;  // R; 0 means 2 int |u - mean| over the solved potential of f
  SetMassOptions mass;
};

// mu(S_eps \ S) >= c (eps/R) t (1 - t); reports the empirical c.
InequalityVerdict buser_milman_check(const WeightedDomain& domain, const SetSpec& set, double eps, const Expr& f,
                                     const BuserOptions& options = {});

struct IsoOptions {
  double tol = 1e-3;
  FamilySearch search;
  SetMassOptions mass;
};

// mu(A_eps) >= I(t, eps). The profile is an upper bound from a finite family
// search, so a pass is reported as "conditional".
InequalityVerdict isoperimetric_check(const WeightedDomain& domain, const SetSpec& set, double eps,
                                      const IsoOptions& options = {});

struct FourFunctionsOptions {
  double h = 0.025;
  double tol = 1e-9;
  DensityOptions density;
};

// (int f1)^a (int f2)^b <= (int f3)^a (int f4)^b. Throws HypothesisViolated
// when the pointwise hypothesis fails on a sample or the 1D inequality fails
// on an extracted needle.
InequalityVerdict four_functions_check(const WeightedDomain& domain, const Expr& f1, const Expr& f2, const Expr& f3,
                                       const Expr& f4, double alpha, double beta,
                                       const FourFunctionsOptions& options = {});

std::string verdicts_json(const std::vector<InequalityVerdict>& verdicts);

}  // namespace needle
