#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <string>

#include "wcontract/expr.hpp"

using namespace wcontract;

TEST(Expr, EvaluatesPolynomial) { EXPECT_EQ(parse_expression("x^2").eval(3), 9); }

TEST(Expr, U2AtZero) {
  auto e = parse_expression("x^2 + 2*exp(-x^2) + a*cos(10*x)", {{"a", 0.25}});
  EXPECT_DOUBLE_EQ(e.eval(0), 2.25);
}

TEST(Expr, DivisionByZeroIsReported) {
  auto e = parse_expression("1/(x-1)");
  EXPECT_THROW(e.eval(1), EvalError);
  EXPECT_DOUBLE_EQ(e.eval(3), 0.5);
}

TEST(Expr, SyntaxErrorCarriesPosition) {
  try {
    parse_expression("x + * 2");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ParseError::Kind::syntax);
    EXPECT_EQ(e.position(), 4u);
  }
}

TEST(Expr, UnknownIdentifierAndUnboundParameter) {
  try {
    parse_expression("log(x)");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ParseError::Kind::unknown_identifier);
  }
  try {
    parse_expression("a*x");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ParseError::Kind::unbound_parameter);
  }
}

TEST(Expr, NonIntegerExponentRejected) { EXPECT_THROW(parse_expression("x^2.5"), ParseError); }

TEST(Expr, DerivativeExamples) {
  auto d = differentiate(parse_expression("x^2"));
  EXPECT_DOUBLE_EQ(d.eval(3), 6);
  auto u1 = parse_expression("x^2 + 2*exp(-x^2)");
  EXPECT_NEAR(differentiate(differentiate(u1)).eval(0), -2, 1e-14);
  auto u2 = parse_expression("x^2 + 2*exp(-x^2) + a*cos(10*x)", {{"a", 0.25}});
  EXPECT_NEAR(differentiate(differentiate(u2)).eval(0), -27, 1e-12);
}

TEST(Expr, U1SecondDerivativeClosedForm) {
  auto d2 = differentiate(differentiate(parse_expression("x^2 + 2*exp(-x^2)")));
  for (double x = -3; x <= 3; x += 0.37) {
    double want = 2 + 2 * (4 * x * x - 2) * std::exp(-x * x);
    EXPECT_NEAR(d2.eval(x), want, 1e-12 * (1 + std::fabs(want)));
  }
}

namespace {

std::string random_expr(std::mt19937_64& g, int depth) {
  std::uniform_int_distribution<int> pick(0, depth > 0 ? 9 : 1);
  std::uniform_real_distribution<double> c(-2, 2);
  switch (pick(g)) {
    case 0: return "x";
    case 1: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", c(g));
      return std::string("(") + buf + ")";
    }
    case 2: return "(" + random_expr(g, depth - 1) + " + " + random_expr(g, depth - 1) + ")";
    case 3: return "(" + random_expr(g, depth - 1) + " - " + random_expr(g, depth - 1) + ")";
    case 4: return "(" + random_expr(g, depth - 1) + " * " + random_expr(g, depth - 1) + ")";
    case 5: return "(" + random_expr(g, depth - 1) + " / (2 + (" + random_expr(g, depth - 1) + ")^2))";
    case 6: return "(" + random_expr(g, depth - 1) + ")^" + std::to_string(g() % 4);
    case 7: return "exp(" + random_expr(g, depth - 1) + " / 4)";
    case 8: return (g() % 2 ? "cos(" : "sin(") + random_expr(g, depth - 1) + ")";
    default: return "tanh(-" + random_expr(g, depth - 1) + ")";
  }
}

}  // namespace

TEST(Expr, PrintParseRoundTripIsExact) {
  std::mt19937_64 g(12345);
  std::uniform_real_distribution<double> xs(-2, 2);
  int checked = 0;
  for (int i = 0; i < 1000; ++i) {
    auto e = parse_expression(random_expr(g, 4));
    auto back = parse_expression(e.to_string());
    for (int k = 0; k < 10; ++k) {
      double x = xs(g);
      double a, b;
      try {
        a = e.eval(x);
      } catch (const EvalError&) {
        EXPECT_THROW(back.eval(x), EvalError);
        continue;
      }
      b = back.eval(x);
      if (std::isnan(a)) {
        EXPECT_TRUE(std::isnan(b));
      } else {
        EXPECT_EQ(a, b) << e.to_string() << " at " << x;
      }
      ++checked;
    }
  }
  EXPECT_GT(checked, 9000);
}

TEST(Expr, DerivativeMatchesCentralDifferences) {
  std::mt19937_64 g(777);
  std::uniform_real_distribution<double> xs(-1.5, 1.5);
  const double h = 1e-5;
  int checked = 0;
  for (int i = 0; i < 300; ++i) {
    auto e = parse_expression(random_expr(g, 3));
    auto d = differentiate(e);
    for (int k = 0; k < 5; ++k) {
      double x = xs(g);
      double fd = (e.eval(x + h) - e.eval(x - h)) / (2 * h);
      double an = d.eval(x);
      double scale = std::max({1.0, std::fabs(an), std::fabs(e.eval(x))});
      // finite differences lose about 1e-10 * |f| / h to rounding
      EXPECT_NEAR(an, fd, 1e-6 * scale) << e.to_string() << " at " << x;
      ++checked;
    }
  }
  EXPECT_EQ(checked, 1500);
}
