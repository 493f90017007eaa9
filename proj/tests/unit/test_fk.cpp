#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "wcontract/fk.hpp"

using namespace wcontract;

namespace {

Mat dense(const FKDiscretization& op) {
  Mat A = Mat::Zero(op.n, op.n);
  for (int i = 0; i < op.n; ++i) {
    A(i, i) = op.diag[i];
    if (i > 0) A(i, i - 1) = op.lower[i];
    if (i + 1 < op.n) A(i, i + 1) = op.upper[i];
  }
  return A;
}

double dense_leading(const FKDiscretization& op) {
  Eigen::EigenSolver<Mat> es(dense(op), false);
  return es.eigenvalues().real().maxCoeff();
}

double J(const DriftModel& m, double p, double dx, double lo = -5, double hi = 5,
         EigenMethod method = EigenMethod::automatic) {
  EigenOptions o;
  o.method = method;
  o.tol = 1e-12;
  return leading_eigenvalue(build_operator(m, p, lo, hi, dx), o).lambda;
}

}  // namespace

TEST(FKOperator, ZeroDriftStencil) {
  auto m = overdamped1d(parse_expression("0"), 1);
  auto op = build_operator(m, 1, 0, 5, 0.5);
  ASSERT_EQ(op.n, 11);
  EXPECT_DOUBLE_EQ(op.sigma2, 2);
  for (int i = 1; i + 1 < op.n; ++i) {
    EXPECT_DOUBLE_EQ(op.diag[i], -8);
    EXPECT_DOUBLE_EQ(op.lower[i], 4);
    EXPECT_DOUBLE_EQ(op.upper[i], 4);
  }
  // mirrored ghost node doubles the inward coupling
  EXPECT_DOUBLE_EQ(op.upper[0], 8);
  EXPECT_DOUBLE_EQ(op.lower[op.n - 1], 8);
  auto d = build_operator(m, 1, 0, 5, 0.5, Boundary::dirichlet);
  EXPECT_DOUBLE_EQ(d.upper[0], 4);
}

TEST(FKOperator, U1PotentialTermAtOrigin) {
  auto m = overdamped_builtin("U1", 1);
  auto op = build_operator(m, 1, -1, 1, 0.1);
  EXPECT_NEAR(op.p_eta[10], 2, 1e-14);
  auto op3 = build_operator(m, 3, -1, 1, 0.1);
  EXPECT_NEAR(op3.p_eta[10], 6, 1e-14);
}

TEST(FKOperator, RejectsTinyDomain) {
  auto m = overdamped_builtin("U0", 1);
  EXPECT_THROW(build_operator(m, 1, 0, 1, 0.2), FKError);
  EXPECT_THROW(build_operator(ornstein_uhlenbeck(1, 2, 1), 1, -1, 1, 0.01), FKError);
}

TEST(FKEigen, ConstantEtaIsExact) {
  auto m = overdamped_builtin("U0", 1);
  for (double p : {1.0, 2.0, 3.5}) EXPECT_NEAR(J(m, p, 1e-2) / p, -2, 1e-9);
}

TEST(FKEigen, EigenvectorIsPositive) {
  auto m = overdamped_builtin("U1", 0.7);
  auto r = leading_eigenvalue(build_operator(m, 2, -5, 5, 0.02));
  ASSERT_TRUE(r.converged);
  double mx = 0;
  for (double v : r.eigenvector) {
    EXPECT_GT(v, 0);
    mx = std::max(mx, v);
  }
  EXPECT_DOUBLE_EQ(mx, 1);
  EXPECT_LT(r.residual, 1e-6);
  EXPECT_LE(r.lo, r.lambda);
  EXPECT_GE(r.hi, r.lambda);
}

TEST(FKEigen, MatchesDenseSolver) {
  for (const char* name : {"U1", "U2"}) {
    auto m = overdamped_builtin(name, 0.9);
    auto op = build_operator(m, 2, -4, 4, 1e-2);
    EigenOptions o;
    o.tol = 1e-12;
    double s = leading_eigenvalue(op, o).lambda;
    EXPECT_NEAR(s, dense_leading(op), 1e-8) << name;
  }
}

TEST(FKEigen, RichardsonAgreesWithFineGrid) {
  auto m = overdamped_builtin("U1", 1);
  auto op1 = build_operator(m, 1, -4, 4, 2e-2), op2 = build_operator(m, 1, -4, 4, 1e-2);
  double rich = (4 * dense_leading(op2) - dense_leading(op1)) / 3;
  EXPECT_NEAR(rich, J(m, 1, 1e-3, -4, 4), 1e-4);
}

TEST(FKEigen, SecondOrderRefinement) {
  auto m = overdamped_builtin("U1", 1);
  double ref = J(m, 1, 5e-4, -4, 4);
  double e1 = J(m, 1, 0.04, -4, 4) - ref, e2 = J(m, 1, 0.02, -4, 4) - ref;
  EXPECT_NEAR(e1 / e2, 4, 0.3);
}

TEST(FKEigen, SturmAndPowerAgree) {
  auto m = overdamped_builtin("U1", 1);
  auto op = build_operator(m, 1, -5, 5, 0.05);
  EigenOptions o;
  o.tol = 1e-13;
  o.method = EigenMethod::sturm;
  auto s = leading_eigenvalue(op, o);
  o.method = EigenMethod::power;
  auto pw = leading_eigenvalue(op, o);
  ASSERT_TRUE(pw.converged) << pw.diagnostic;
  EXPECT_NEAR(s.lambda, pw.lambda, 1e-8);
  for (int i = 0; i < op.n; ++i) EXPECT_NEAR(s.eigenvector[i], pw.eigenvector[i], 1e-5);
}

TEST(FKEigen, ShiftIdentity) {
  auto m = overdamped_builtin("U2", 0.8);
  auto op = build_operator(m, 2, -5, 5, 0.01);
  double base = leading_eigenvalue(op).lambda;
  for (auto& v : op.diag) v += 0.37;
  EXPECT_NEAR(leading_eigenvalue(op).lambda, base + 0.37, 1e-9);
}

TEST(FKEigen, MonotoneInEta) {
  auto m = overdamped_builtin("U1", 1);
  auto op = build_operator(m, 1, -5, 5, 0.01);
  double base = leading_eigenvalue(op).lambda;
  // raise eta by a nonnegative bump; the Perron root cannot decrease
  for (int i = 0; i < op.n; ++i) op.diag[i] += 0.1 * std::exp(-op.x[i] * op.x[i]);
  double bumped = leading_eigenvalue(op).lambda;
  EXPECT_GT(bumped, base);
  EXPECT_LT(bumped, base + 0.1 + 1e-9);
}

TEST(FKEigen, PowerReportsNegativeOffDiagonal) {
  // strong drift on a coarse grid breaks the M-matrix sign pattern
  auto m = overdamped1d(parse_expression("100*x^2"), 0.1);
  auto op = build_operator(m, 1, -5, 5, 0.5);
  EigenOptions o;
  o.method = EigenMethod::power;
  auto r = leading_eigenvalue(op, o);
  EXPECT_FALSE(r.converged);
  EXPECT_FALSE(r.diagnostic.empty());
  o.method = EigenMethod::sturm;
  EXPECT_THROW(leading_eigenvalue(op, o), FKError);
}

TEST(Sturm, CountsAndLargest) {
  // tridiag(1, 2, 1) of size 5 has eigenvalues 2 + 2 cos(k pi / 6)
  std::vector<double> d(5, 2.0), e(4, 1.0);
  EXPECT_EQ(sturm_count(d, e, 0), 0);
  EXPECT_EQ(sturm_count(d, e, 2.0 + 1e-9), 3);
  EXPECT_EQ(sturm_count(d, e, 10), 5);
  auto [lo, hi] = sturm_largest(d, e, 1e-13);
  double want = 2 + 2 * std::cos(M_PI / 6);
  EXPECT_LE(lo, want + 1e-15);
  EXPECT_GE(hi, want - 1e-15);
  EXPECT_LT(hi - lo, 1e-12);
}

TEST(Sweep, SignPatternAndThreads) {
  auto fam = [](double th) { return overdamped_builtin("U0", th); };
  SweepOptions o;
  o.dx = 0.02;
  o.threads = 1;
  auto a = sweep(fam, linspace(1, 3, 3), linspace(0.1, 2, 4), o);
  o.threads = 3;
  auto b = sweep(fam, linspace(1, 3, 3), linspace(0.1, 2, 4), o);
  EXPECT_EQ(a.values, b.values);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_NEAR(a.at(i, j), -2, 1e-9);
      EXPECT_TRUE(a.converged[i * 4 + j]);
    }
  EXPECT_THROW(sweep(fam, {}, {1}, o), FKError);
}

TEST(Linspace, Endpoints) {
  auto v = linspace(0.1, 2, 25);
  ASSERT_EQ(v.size(), 25u);
  EXPECT_EQ(v.front(), 0.1);
  EXPECT_EQ(v.back(), 2);
  EXPECT_EQ(linspace(3, 4, 1), std::vector<double>{3});
}
