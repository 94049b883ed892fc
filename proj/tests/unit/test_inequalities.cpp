#include <doctest.h>

#include <cmath>

#include "../oracles/oracles.hpp"
#include "fixtures.hpp"
#include "needle/error.hpp"
#include "needle/inequalities.hpp"

using namespace needle;

namespace {

WeightedDomain interval(double a, double b) { return make_domain(Polytope::interval(a, b)); }

WeightedDomain unit_cube() { return make_domain(Polytope::box(3, Point(0, 0, 0), Point(1, 1, 1))); }

}  // namespace

TEST_CASE("set masses of slabs, empty sets and intervals") {
  const auto sq = fixture::unit_square();
  const SetSpec left = SetSpec::half_space(Point(1, 0, 0), 0.5);
  CHECK(set_mass(sq, left, 0.0).value == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(set_mass(sq, left, 0.1).value == doctest::Approx(0.6).epsilon(1e-9));
  CHECK(set_mass(sq, SetSpec::empty(), 0.3).value == 0.0);
  CHECK(set_mass(sq, SetSpec::box(Point(0.2, 0.2, 0), Point(0.4, 0.6, 0)), 0.0).value ==
        doctest::Approx(0.08).epsilon(1e-9));

  const auto I = interval(0, 1);
  CHECK(set_mass(I, SetSpec::half_space(Point(1, 0, 0), 0.5), 0.1).value == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(set_mass(I, SetSpec::ball(Point(0.9, 0, 0), 0.2), 0.05).value == doctest::Approx(0.35).epsilon(1e-12));
}

TEST_CASE("quarter-disk neighbourhood: clipping and Monte Carlo against the exact area") {
  const auto sq = fixture::unit_square();
  const SetSpec quarter = SetSpec::ball(Point(0, 0, 0), 0.5);
  // Inside the quadrant the neighbourhood of a quarter disk is the larger quarter disk.
  const double exact = M_PI * 0.55 * 0.55 / 4;
  const SetMass clip = set_mass(sq, quarter, 0.05);
  CHECK_FALSE(clip.monte_carlo);
  CHECK(clip.value == doctest::Approx(exact).epsilon(1e-6));
  SetMassOptions mc;
  mc.monte_carlo = true;
  mc.seed = 3;
  const SetMass est = set_mass(sq, quarter, 0.05, mc);
  CHECK(est.monte_carlo);
  CHECK(std::abs(est.value - exact) <= 0.02 * exact);
  CHECK(std::abs(est.value - exact) <= 4 * est.error);
}

TEST_CASE("ball in the square: Monte Carlo and clipping agree") {
  const auto sq = fixture::unit_square();
  const SetSpec ball = SetSpec::ball(Point(0.5, 0.5, 0), 0.2);
  SetMassOptions mc;
  mc.monte_carlo = true;
  for (double eps : {0.0, 0.1}) {
    const double clip = set_mass(sq, ball, eps).value;
    CHECK(clip == doctest::Approx(M_PI * (0.2 + eps) * (0.2 + eps)).epsilon(1e-6));
    CHECK(set_mass(sq, ball, eps, mc).value == doctest::Approx(clip).epsilon(0.02));
  }
}

TEST_CASE("3D set masses use Monte Carlo with error bars") {
  const auto cube = unit_cube();
  SetMassOptions opt;
  opt.samples = 40000;
  const SetMass slab = set_mass(cube, SetSpec::half_space(Point(1, 0, 0), 0.5), 0.1, opt);
  CHECK(slab.monte_carlo);
  CHECK(slab.error > 0);
  CHECK(std::abs(slab.value - 0.6) <= 4 * slab.error);
  const SetMass ball = set_mass(cube, SetSpec::ball(Point(0.5, 0.5, 0.5), 0.2), 0.1, opt);
  const double exact = 4.0 / 3.0 * M_PI * 0.027;
  CHECK(std::abs(ball.value - exact) <= 4 * ball.error);
}

TEST_CASE("Poincare: 1D extremal, affine function, zero function") {
  PoincareOptions opt;
  opt.h = 0.005;
  const double D = 2.0;
  const auto I = interval(0, D);
  const InequalityVerdict ext = poincare_check(I, Expr::parse("cos(3.141592653589793*x1/2)"), opt);
  CHECK(ext.pass);
  CHECK(ext.values.at("ratio") == doctest::Approx(1.0).epsilon(1e-3));

  const auto sq = fixture::unit_square();
  opt.h = 0.02;
  const InequalityVerdict aff = poincare_check(sq, Expr::parse("x1 + 2*x2"), opt);
  CHECK(aff.pass);
  // int |grad f|^2 / int (f - mean)^2 = 5 / (5/12).
  CHECK(aff.rhs / aff.values.at("int_f2") == doctest::Approx(12.0).epsilon(1e-3));
  CHECK(aff.values.at("lambda") == doctest::Approx(M_PI * M_PI / 2));
  CHECK(aff.lhs < aff.rhs);

  const InequalityVerdict zero = poincare_check(sq, Expr::parse("0"), opt);
  CHECK(zero.pass);
  CHECK(zero.lhs == 0.0);
  CHECK(zero.rhs == 0.0);
}

TEST_CASE("Poincare needle certificates on the square") {
  PoincareOptions opt;
  opt.h = 0.025;
  opt.needles = true;
  const InequalityVerdict v = poincare_check(fixture::unit_square(), Expr::parse("x1 - 0.5"), opt);
  CHECK(v.pass);
  CHECK(v.needles.checked > 20);
  CHECK(v.needles.passed == v.needles.checked);
}

TEST_CASE("Buser-Milman on the square") {
  const auto sq = fixture::unit_square();
  BuserOptions opt;
  opt.radius = 1.0;
  const Expr f = Expr::parse("x1 - 0.5");
  const InequalityVerdict v = buser_milman_check(sq, SetSpec::half_space(Point(1, 0, 0), 0.5), 0.1, f, opt);
  CHECK(v.lhs == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(v.values.at("t") * (1 - v.values.at("t")) == doctest::Approx(0.25));
  CHECK(v.values.at("c") == doctest::Approx(4.0).epsilon(1e-6));
  CHECK(v.pass);

  const InequalityVerdict e = buser_milman_check(sq, SetSpec::empty(), 0.1, f, opt);
  CHECK(e.pass);
  CHECK(e.lhs == 0.0);
  CHECK(e.rhs == 0.0);

  // R from the solved potential: u = -x1 up to a constant gives 2 int |x1 - 1/2| = 1/2.
  opt.radius = 0.0;
  opt.h = 0.05;
  const InequalityVerdict r = buser_milman_check(sq, SetSpec::half_space(Point(1, 0, 0), 0.5), 0.1, f, opt);
  CHECK(r.values.at("R") == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("isoperimetric check on the interval and the square") {
  const auto I = interval(0, 1);
  const SetSpec half = SetSpec::half_space(Point(1, 0, 0), 0.5);
  const InequalityVerdict v = isoperimetric_check(I, half, 0.1);
  CHECK(v.rhs == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(v.lhs <= 0.6 + 1e-9);
  CHECK(v.pass);
  CHECK(v.status == "conditional");

  const InequalityVerdict small = isoperimetric_check(I, half, 1e-6);
  CHECK(small.lhs == doctest::Approx(0.5).epsilon(1e-4));
  CHECK(small.rhs == doctest::Approx(0.5).epsilon(1e-4));

  const InequalityVerdict ball = isoperimetric_check(fixture::unit_square(), SetSpec::ball(Point(0.5, 0.5, 0), 0.25), 0.05);
  CHECK(ball.pass);
  CHECK(ball.lhs >= ball.values.at("t"));
}

TEST_CASE("four functions: identity, monotone and violated hypotheses") {
  const auto sq = fixture::unit_square();
  FourFunctionsOptions opt;
  opt.h = 0.05;
  const Expr g = Expr::parse("1 + x1*x2");
  const Expr h = Expr::parse("exp(-x1)");
  const InequalityVerdict same = four_functions_check(sq, g, h, g, h, 0.7, 1.3, opt);
  CHECK(same.pass);
  CHECK(same.lhs == doctest::Approx(same.rhs));
  CHECK(same.needles.checked == 0);

  const Expr gd = Expr::parse("1.2 + x1*x2 + 0.3*x1");
  const InequalityVerdict mono = four_functions_check(sq, g, g, gd, gd, 1.0, 1.0, opt);
  CHECK(mono.pass);
  CHECK(mono.lhs < mono.rhs);
  CHECK(mono.needles.checked > 0);
  CHECK(mono.needles.passed == mono.needles.checked);

  try {
    four_functions_check(sq, gd, g, g, g, 1.0, 1.0, opt);
    FAIL("expected HypothesisViolated");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::HypothesisViolated);
  }
}

TEST_CASE("four-function integrals match direct quadrature") {
  const auto sq = fixture::unit_square();
  FourFunctionsOptions opt;
  opt.h = 0.025;
  const char* src[4] = {"1 + sin(2*x1)*x2", "exp(-x1*x2)", "1.5 + sin(2*x1)*x2 + x1^2", "exp(-x1*x2) + 0.2*x2"};
  Expr f[4];
  for (int k = 0; k < 4; ++k) f[k] = Expr::parse(src[k]);
  const InequalityVerdict v = four_functions_check(sq, f[0], f[1], f[2], f[3], 0.5, 2.0, opt);
  CHECK(v.pass);
  for (int k = 0; k < 4; ++k) {
    const double oracle = oracle::integrate2([&](double x, double y) { return f[k](Point(x, y, 0)); }, 0, 1, 0, 1, 20);
    const std::string key = "int_f" + std::to_string(k + 1);
    CHECK(v.values.at(key) == doctest::Approx(oracle).epsilon(1e-3));
    CHECK(v.values.at("needle_" + key) == doctest::Approx(oracle).epsilon(2e-2));
  }
}
