#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "needle/expr.hpp"
#include "needle/foliation.hpp"
#include "needle/transport.hpp"

namespace fixture {

using namespace needle;

inline WeightedDomain unit_square() { return make_domain(Polytope::box(2, Point(0, 0, 0), Point(1, 1, 0))); }

// Polygonal disk of radius 0.5 about (0.5, 0.5).
inline WeightedDomain disk() { return make_domain(Polytope::regular_polygon(128, 0.5, Point(0.5, 0.5, 0), 0.0)); }

inline const Point kApex(-0.5, 0.5, 0.0);

// Radial chords of the disk through the exterior apex balance under this sign
// function, so the optimal potential is -|x - apex| up to a constant.
inline std::vector<double> cone_f(const DiscreteMeasure& m) {
  const Point v = Point(0.5, 0.5, 0.0) - kApex;
  std::vector<double> f;
  for (const auto& p : m.points) {
    const Point r = p - kApex;
    const double s2 = r.squaredNorm();
    const double a = r.dot(v);
    f.push_back(2 * a * a / s2 + 0.25 - v.squaredNorm() - s2 > 0 ? 1.0 : -1.0);
  }
  return f;
}

// u = x1 on the unit square, generated from a dense column on x1 = 0.
inline LipschitzPotential linear_potential(const DiscreteMeasure& m) {
  LipschitzPotential p;
  for (const auto& x : m.points) p.values.push_back(x(0));
  for (int k = 0; k <= 2000; ++k) {
    p.generator_points.emplace_back(0.0, k / 2000.0, 0.0);
    p.generator_values.push_back(0.0);
  }
  return p;
}

struct Solved {
  SignedData data;
  TransportPlan plan;
  LipschitzPotential potential;
};

inline Solved solve(SignedData data) {
  Solved s{std::move(data), {}, {}};
  const SplitAtoms atoms = split_signed(s.data);
  s.plan = solve_transportation(atoms.sources, atoms.sinks);
  s.potential = recover_potential(s.plan, s.data);
  return s;
}

inline Solved solve(const WeightedDomain& domain, const std::string& f, double h) {
  return solve(make_signed_data(sample_measure(domain, SamplingStrategy::Grid, h), Expr::parse(f)));
}

inline Solved solve_cone(double h) {
  DiscreteMeasure m = sample_measure(disk(), SamplingStrategy::Grid, h);
  auto f = cone_f(m);
  return solve(make_signed_data(std::move(m), std::move(f)));
}

}  // namespace fixture
