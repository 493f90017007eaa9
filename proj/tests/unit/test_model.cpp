#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "wcontract/model.hpp"

using namespace wcontract;

namespace {

Mat fd_jacobian(const DriftModel& m, const Vec& x, double h = 1e-6) {
  Mat J(m.dim, m.dim);
  for (int j = 0; j < m.dim; ++j) {
    Vec a = x, b = x;
    a[j] += h;
    b[j] -= h;
    J.col(j) = (m.b(a) - m.b(b)) / (2 * h);
  }
  return J;
}

std::vector<DriftModel> builtin_models() {
  std::vector<DriftModel> ms;
  ms.push_back(overdamped_builtin("U0", 1));
  ms.push_back(overdamped_builtin("U1", 1));
  ms.push_back(overdamped_builtin("U2", 0.7));
  ms.push_back(overdamped1d(parse_expression("x^4/4 - x^2/2"), 1));
  ms.push_back(ornstein_uhlenbeck(1.5, 3, 1));
  ms.push_back(kinetic_langevin(parse_expression("x^2/2"), 2, 1, 1));
  ms.push_back(kinetic_langevin(parse_expression("x^4/4 - x^2"), 1, 1, 2));
  ms.push_back(colored_noise(parse_expression("x^2/2"), Mat::Ones(1, 1), Mat::Ones(1, 1)).qw);
  ms.push_back(colored_noise(parse_expression("x^2/2"), Mat::Ones(1, 1), Mat::Ones(1, 1)).yz);
  Mat A(2, 2);
  A << -1, 2, 0, -3;
  ms.push_back(linear_model(A, Mat::Identity(2, 2)));
  return ms;
}

}  // namespace

TEST(Model, OrnsteinUhlenbeck) {
  auto m = ornstein_uhlenbeck(1, 1, 1);
  Vec x(1);
  x << 0.7;
  EXPECT_DOUBLE_EQ(m.b(x)[0], -0.7);
  EXPECT_DOUBLE_EQ(m.eta_at(x), -1);
  ASSERT_TRUE(m.lambda_star.has_value());
  EXPECT_DOUBLE_EQ(*m.lambda_star, 1);
  EXPECT_NEAR(m.sigma(0, 0), std::sqrt(2.0), 1e-15);
}

TEST(Model, OverdampedQuadratic) {
  auto m = overdamped1d(parse_expression("x^2"), 1);
  for (double x : {-2.0, 0.0, 1.3}) {
    Vec v(1);
    v << x;
    EXPECT_DOUBLE_EQ(m.b(v)[0], -2 * x);
    EXPECT_DOUBLE_EQ(m.eta_at(v), -2);
  }
}

TEST(Model, BuiltinPotentialsMatchExpressions) {
  auto u1 = overdamped_builtin("U1", 1);
  auto u1e = overdamped1d(parse_expression("x^2 + 2*exp(-x^2)"), 1);
  auto u2 = overdamped_builtin("U2", 1);
  auto u2e = overdamped1d(parse_expression("x^2 + 2*exp(-x^2) + 0.25*cos(10*x)"), 1);
  for (double x = -4; x <= 4; x += 0.173) {
    double b1, db1, e1, b2, db2, e2;
    u1.scalar(x, b1, db1, e1);
    u1e.scalar(x, b2, db2, e2);
    EXPECT_NEAR(b1, b2, 1e-13);
    EXPECT_NEAR(e1, e2, 1e-13);
    EXPECT_EQ(db1, e1);
    u2.scalar(x, b1, db1, e1);
    u2e.scalar(x, b2, db2, e2);
    EXPECT_NEAR(b1, b2, 1e-12);
    EXPECT_NEAR(e1, e2, 1e-11);
  }
}

TEST(Model, U1EtaAtZero) {
  auto m = overdamped_builtin("U1", 1);
  Vec x = Vec::Zero(1);
  EXPECT_NEAR(m.eta_at(x), 2, 1e-15);
}

TEST(Model, KineticJacobian) {
  auto m = kinetic_langevin(parse_expression("x^2/2"), 2, 1, 1);
  std::mt19937_64 g(3);
  std::normal_distribution<double> n;
  for (int k = 0; k < 5; ++k) {
    Vec x(2);
    x << 3 * n(g), 3 * n(g);
    Mat J = m.grad_b(x);
    EXPECT_DOUBLE_EQ(J(0, 0), 0);
    EXPECT_DOUBLE_EQ(J(0, 1), 1);
    EXPECT_DOUBLE_EQ(J(1, 0), -1);
    EXPECT_DOUBLE_EQ(J(1, 1), -2);
  }
}

TEST(Model, EtaBoundsSymmetricJacobian) {
  std::mt19937_64 g(11);
  std::normal_distribution<double> n;
  for (const auto& m : builtin_models()) {
    for (int k = 0; k < 100; ++k) {
      Vec x(m.dim);
      for (int i = 0; i < m.dim; ++i) x[i] = 2 * n(g);
      EXPECT_LE(max_sym_eigenvalue(m.grad_b(x)), m.eta_at(x) + 1e-9) << m.kind;
    }
  }
}

TEST(Model, OneDimensionalEtaIsDerivative) {
  for (const auto& m : builtin_models()) {
    if (m.dim != 1) continue;
    for (double x = -3; x <= 3; x += 0.31) {
      Vec v(1);
      v << x;
      EXPECT_DOUBLE_EQ(m.eta_at(v), m.grad_b(v)(0, 0)) << m.kind;
    }
  }
}

TEST(Model, JacobianMatchesFiniteDifferences) {
  std::mt19937_64 g(5);
  std::normal_distribution<double> n;
  for (const auto& m : builtin_models()) {
    for (int k = 0; k < 20; ++k) {
      Vec x(m.dim);
      for (int i = 0; i < m.dim; ++i) x[i] = 1.5 * n(g);
      Mat J = m.grad_b(x), F = fd_jacobian(m, x);
      double scale = std::max(1.0, J.cwiseAbs().maxCoeff());
      EXPECT_LE((J - F).cwiseAbs().maxCoeff(), 1e-5 * scale) << m.kind;
    }
  }
}

TEST(Model, MetricSquareRoots) {
  Mat Q(3, 3);
  Q << 4, 1, 0.5, 1, 3, 0.2, 0.5, 0.2, 2;
  auto mc = make_metric(Q, 0.5, 1);
  EXPECT_LE((mc.Q_half * mc.Q_half - Q).norm() / Q.norm(), 1e-12);
  EXPECT_LE((mc.Q_half * mc.Q_inv_half - Mat::Identity(3, 3)).norm(), 1e-12);
}

TEST(Model, MetricRejectsIllConditioned) {
  Mat Q = Mat::Identity(2, 2);
  Q(1, 1) = 1e-13;
  EXPECT_THROW(make_metric(Q, 1, 1), ModelError);
  Mat N(2, 2);
  N << 1, 0.5, 0, 1;
  EXPECT_THROW(make_metric(N, 1, 1), ModelError);
}

TEST(Model, DecompositionNeedsPositiveResidual) {
  Mat s = Mat::Identity(2, 2);
  EXPECT_NO_THROW(make_decomposition(s, 1, 1, 1, 1, 1, 1, 1.0));
  EXPECT_THROW(make_decomposition(s, 1, 1, 1, 1, 1, 1, 1.5), ModelError);
  auto d = make_decomposition(2 * s, 1, 1, 1, 1, 1, 1, 1.0);
  Mat S = d.sigma_tilde * d.sigma_tilde.transpose();
  Mat want(2, 2);
  want << 4, 0, 0, 3;
  EXPECT_LE((S - want).norm(), 1e-12);
}

TEST(Model, ColoredNoiseChangeOfVariables) {
  auto cn = colored_noise(parse_expression("x^2/2"), Mat::Ones(1, 1), Mat::Ones(1, 1));
  EXPECT_DOUBLE_EQ(cn.eta_cv, 2);
  EXPECT_TRUE(cn.constant_hessian);
  // Y = q, Z = w + eta_cv q
  Vec qw(2);
  qw << 0.3, -0.8;
  Vec yz = cn.T * qw;
  EXPECT_DOUBLE_EQ(yz[0], 0.3);
  EXPECT_DOUBLE_EQ(yz[1], -0.8 + 2 * 0.3);
  // drift transforms as T b(T^{-1} x)
  Vec lhs = cn.yz.b(yz), rhs = cn.T * cn.qw.b(qw);
  EXPECT_LE((lhs - rhs).norm(), 1e-14);
  ASSERT_TRUE(cn.yz.decomposition.has_value());
  ASSERT_TRUE(cn.yz.metric.has_value());
  EXPECT_GT(cn.yz.decomposition->rho1, 0);
  EXPECT_DOUBLE_EQ(cn.yz.decomposition->theta, 1);
  // the metric contracts the linear drift: B^T Q + Q B = -I
  Mat B = cn.yz.grad_b(Vec::Zero(2));
  const Mat& Q = cn.yz.metric->Q;
  EXPECT_LE((B.transpose() * Q + Q * B + Mat::Identity(2, 2)).norm(), 1e-12);
}

TEST(Model, ColoredNoiseDefaultWeight) {
  // eta_cv sigma_min(A^T)^2 >= 2 L with L = sup(-V'') floored at 1
  auto cn = colored_noise(parse_expression("x^4/4 - 3*x^2/2"), 2 * Mat::Ones(1, 1), Mat::Ones(1, 1));
  EXPECT_NEAR(cn.curvature_L, 3, 1e-12);
  EXPECT_NEAR(cn.eta_cv * 4, 2 * 3, 1e-12);
  EXPECT_FALSE(cn.constant_hessian);
}

TEST(Model, RejectsBadParameters) {
  EXPECT_THROW(overdamped1d(parse_expression("x^2"), 0), ModelError);
  EXPECT_THROW(kinetic_langevin(parse_expression("x^2"), -1, 1, 1), ModelError);
  EXPECT_THROW(linear_model(Mat::Identity(2, 3), Mat::Identity(2, 2)), ModelError);
}
