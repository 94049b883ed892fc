#include <doctest.h>

#include <cmath>

#include "needle/error.hpp"
#include "needle/expr.hpp"

using namespace needle;

TEST_CASE("parse and evaluate") {
  CHECK(Expr::parse("x1")(Point(0.3, 0.5, 0)) == doctest::Approx(0.3));
  CHECK(Expr::parse("sin(3.14*x1) - x2^2")(Point(0, 1, 0)) == doctest::Approx(-1.0));
  CHECK(Expr::parse("2*3+4")(Point::Zero()) == doctest::Approx(10));
  CHECK(Expr::parse("8/2/2")(Point::Zero()) == doctest::Approx(2));
  CHECK(Expr::parse("1-2-3")(Point::Zero()) == doctest::Approx(-4));
  CHECK(Expr::parse("-x1^2")(Point(3, 0, 0)) == doctest::Approx(-9));
  CHECK(Expr::parse(" sqrt( abs(-4) ) ")(Point::Zero()) == doctest::Approx(2));
  CHECK(Expr::parse("exp(log(2.5e1))")(Point::Zero()) == doctest::Approx(25));
  CHECK(Expr::parse("x3*cos(0)")(Point(0, 0, 7)) == doctest::Approx(7));
  CHECK(Expr::parse("x2").arity() == 2);
}

TEST_CASE("syntax errors carry byte offsets") {
  try {
    Expr::parse("x1 +");
    FAIL("expected a syntax error");
  } catch (const ParseError& e) {
    CHECK(e.code() == ErrorCode::SyntaxError);
    CHECK(e.offset() == 4);
  }
  try {
    Expr::parse("(x1");
    FAIL("expected a syntax error");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 3);
  }
  try {
    Expr::parse("x1 ) ");
    FAIL("expected a syntax error");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 3);
  }
  try {
    Expr::parse("1 + y");
    FAIL("expected an unknown identifier");
  } catch (const ParseError& e) {
    CHECK(e.code() == ErrorCode::UnknownIdentifier);
    CHECK(e.offset() == 4);
  }
  CHECK_THROWS_AS(Expr::parse("x4"), ParseError);
  CHECK_THROWS_AS(Expr::parse("sin x1"), ParseError);
  CHECK_THROWS_AS(Expr::parse(""), ParseError);
}

TEST_CASE("gradients match central differences") {
  const char* sources[] = {"sin(3*x1)*x2 + x1^3", "exp(-x1*x1 - x2/2)", "log(2 + x1) / (1 + x2^2)",
                           "sqrt(1 + x1*x1) - abs(x2 - 5)", "x1^x2"};
  const Point x(0.7, 0.4, 0.0);
  for (const char* s : sources) {
    auto e = Expr::parse(s);
    Point g;
    const double v = e.eval_grad(x, &g);
    CHECK(v == doctest::Approx(e(x)));
    for (int k = 0; k < 2; ++k) {
      Point dx = Point::Zero();
      dx[k] = 1e-6;
      const double fd = (e(x + dx) - e(x - dx)) / 2e-6;
      CHECK(g[k] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}
