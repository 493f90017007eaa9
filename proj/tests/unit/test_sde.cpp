#include <gtest/gtest.h>

#include <cmath>
#include <unsupported/Eigen/MatrixFunctions>

#include "wcontract/sde.hpp"

using namespace wcontract;

namespace {

Vec v1(double x) {
  Vec v(1);
  v << x;
  return v;
}

Mat phi_euler(const Mat& A, double T, double dt) {
  auto m = linear_model(A, Mat::Identity(A.rows(), A.rows()));
  const long n = step_count(T, dt);
  PathState s = PathState::with_matrix(Vec::Zero(A.rows()));
  std::vector<double> zero(A.rows(), 0.0);
  for (long i = 0; i < n; ++i) s = em_step(m, s, T / n, zero.data());
  return s.phi;
}

}  // namespace

TEST(EmStep, OrnsteinUhlenbeckZeroNoise) {
  auto m = ornstein_uhlenbeck(1, 1, 1);
  PathState s = PathState::with_tangent(v1(1), v1(1));
  double xi = 0;
  s = em_step(m, s, 0.01, &xi);
  EXPECT_DOUBLE_EQ(s.x[0], 0.99);
  EXPECT_DOUBLE_EQ(s.v[0], 0.99);
  EXPECT_DOUBLE_EQ(s.t, 0.01);
}

TEST(EmStep, ZeroDriftKeepsTangentAndAddsNoise) {
  auto m = linear_model(Mat::Zero(2, 2), Mat::Identity(2, 2));
  Vec v(2);
  v << 0.6, 0.8;
  PathState s = PathState::with_tangent(Vec::Zero(2), v);
  double xi[2] = {1.5, -2};
  s = em_step(m, s, 0.04, xi);
  EXPECT_EQ(s.v, v);
  EXPECT_DOUBLE_EQ(s.x[0], 0.2 * 1.5);
  EXPECT_DOUBLE_EQ(s.x[1], 0.2 * -2);
}

TEST(EmStep, TrapezoidIntegral) {
  auto m = overdamped_builtin("U1", 1);
  PathState s = PathState::start(v1(0.3));
  s.track_integral = true;
  double xi = 0.7;
  PathState t = em_step(m, s, 0.01, &xi);
  double want = 0.5 * 0.01 * (m.eta_at(v1(0.3)) + m.eta_at(t.x));
  EXPECT_NEAR(t.integral, want, 1e-16);
}

TEST(EmStep, DivergenceFlagged) {
  auto m = overdamped1d(parse_expression("-x^4"), 1);
  PathState s = PathState::start(v1(10));
  double xi = 0;
  for (int i = 0; i < 50 && !s.divergent; ++i) s = em_step(m, s, 0.1, &xi);
  EXPECT_TRUE(s.divergent);
}

TEST(TangentMatrix, MatchesMatrixExponentialToFirstOrder) {
  Mat A(3, 3);
  A << -1, 0.5, 0, -0.3, -0.8, 0.2, 0.1, 0, -1.5;
  const double T = 2;
  Mat E = (T * A).exp();
  double e1 = (phi_euler(A, T, 1e-3) - E).norm() / E.norm();
  double e2 = (phi_euler(A, T, 5e-4) - E).norm() / E.norm();
  EXPECT_LE(e1, 5 * 1e-3);
  EXPECT_LE(e2, 5 * 5e-4);
  EXPECT_NEAR(e1 / e2, 2, 0.05);  // first order in dt
}

TEST(IntegratePair, OrnsteinUhlenbeckContractsExactly) {
  auto m = ornstein_uhlenbeck(1, 1, 1);
  RngStream rng(3, 0);
  const double T = 2, dt = 1e-3;
  auto [a, b] = integrate_pair(m, v1(1.5), v1(-0.5), T, dt, rng);
  double want = std::pow(1 - dt, 2000) * 2.0;
  EXPECT_NEAR(std::fabs(a.x[0] - b.x[0]), want, 1e-12);
  EXPECT_NEAR(want, 2 * std::exp(-T), 2 * std::exp(-T) * T * dt);
}

TEST(IntegratePair, ZeroDriftPreservesDistance) {
  auto m = linear_model(Mat::Zero(2, 2), Mat::Identity(2, 2));
  RngStream rng(3, 1);
  Vec x(2), y(2);
  x << 1, 2;
  y << -1, 0.5;
  auto [a, b] = integrate_pair(m, x, y, 1, 1e-2, rng);
  EXPECT_NEAR((a.x - b.x).norm(), (x - y).norm(), 1e-12);
}

TEST(IntegratePair, EqualStartsStayEqual) {
  auto m = overdamped1d(parse_expression("x^4/4 - x^2/2"), 1);
  RngStream rng(5, 2);
  auto [a, b] = integrate_pair(m, v1(0.1), v1(0.1), 5, 1e-3, rng);
  EXPECT_EQ(a.x[0], b.x[0]);
}

TEST(IntegrateTangent, OneDimensionalPathwiseIdentity) {
  // with V <- V exp(b' dt) and the left-point rule the two are the same product
  auto m = overdamped_builtin("U1", 1);
  StepOptions o{TangentScheme::frozen_exponential, IntegralRule::left_point};
  for (std::uint64_t i = 0; i < 20; ++i) {
    RngStream rng(17, i);
    auto r = integrate_tangent(m, v1(0.2), v1(1), 5, 1e-3, rng, o);
    ASSERT_FALSE(r.divergent);
    double e = std::exp(r.integral);
    EXPECT_LE(std::fabs(std::fabs(r.v[0]) - e), 1e-8 * e);
  }
}

TEST(IntegrateTangent, EulerAgreesWithIntegralToFirstOrder) {
  auto m = overdamped_builtin("U1", 1);
  RngStream rng(17, 3);
  auto r = integrate_tangent(m, v1(0.2), v1(1), 2, 1e-4, rng);
  EXPECT_NEAR(std::log(std::fabs(r.v[0])), r.integral, 0.01);
}

TEST(IntegrateTangent, OrnsteinUhlenbeck) {
  auto m = ornstein_uhlenbeck(1, 2, 1);
  RngStream rng(1, 1);
  Vec v(2);
  v << 0.6, -0.8;
  auto r = integrate_tangent(m, Vec::Zero(2), v, 1, 1e-3, rng);
  EXPECT_NEAR(r.v.norm(), std::exp(-1.0), 1e-3);
  EXPECT_THROW(integrate_tangent(m, Vec::Zero(2), 2 * v, 1, 1e-3, rng), std::invalid_argument);
}

TEST(IntegrateTangent, Reproducible) {
  auto m = overdamped_builtin("U2", 0.8);
  RngStream r1(99, 4), r2(99, 4);
  auto a = integrate_tangent(m, v1(0), v1(1), 1, 1e-3, r1);
  auto b = integrate_tangent(m, v1(0), v1(1), 1, 1e-3, r2);
  EXPECT_EQ(a.x[0], b.x[0]);
  EXPECT_EQ(a.v[0], b.v[0]);
  EXPECT_EQ(a.integral, b.integral);
}

TEST(WeakError, OrnsteinUhlenbeckVariance) {
  // dX = -X dt + sqrt(2) theta dB: Var X_T = theta^2 (1 - e^{-2T})
  const double theta = 0.8, T = 0.5, dt = 1e-3;
  auto m = ornstein_uhlenbeck(1, 1, theta);
  const long N = 100000;
  const long n = step_count(T, dt);
  double s1 = 0, s2 = 0, s4 = 0;
  for (long i = 0; i < N; ++i) {
    RngStream rng(2024, i);
    PathState s = PathState::start(v1(0));
    for (long k = 0; k < n; ++k) s = em_step(m, s, T / n, rng);
    double x = s.x[0];
    s1 += x;
    s2 += x * x;
    s4 += x * x * x * x;
  }
  double mean = s1 / N, m2 = s2 / N, var = m2 - mean * mean;
  double se = std::sqrt((s4 / N - m2 * m2) / N);
  double want = theta * theta * (1 - std::exp(-2 * T));
  EXPECT_LE(std::fabs(var - want), 3 * se);
}
