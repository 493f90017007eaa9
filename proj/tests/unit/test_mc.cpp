#include <gtest/gtest.h>

#include <cmath>

#include "wcontract/mc.hpp"

using namespace wcontract;

namespace {

McOptions opts(long N, double dt, std::uint64_t seed, int threads = 1) {
  McOptions o;
  o.N = N;
  o.dt = dt;
  o.seed = seed;
  o.threads = threads;
  return o;
}

}  // namespace

TEST(Kappa, OrnsteinUhlenbeckIsExponential) {
  auto m = ornstein_uhlenbeck(1, 1, 1);
  auto spec = SupSearchSpec::grid1d(-2, 2, 0.5);
  auto r = estimate_kappa_grid(m, {1, 2, 3}, {0.5, 1, 2}, spec, opts(200, 1e-4, 1));
  ASSERT_EQ(r.size(), 9u);
  for (const auto& k : r) EXPECT_NEAR(k.estimate.value, std::exp(-k.t), 1e-3) << k.p << " " << k.t;
}

TEST(Kappa, MultiDimensionalOrnsteinUhlenbeck) {
  auto m = ornstein_uhlenbeck(0.5, 2, 1);
  Vec x = Vec::Zero(2);
  auto r = estimate_kappa_p(m, 2, 1, SupSearchSpec::single(x), opts(50, 1e-3, 2));
  EXPECT_NEAR(r.estimate.value, std::exp(-0.5), 1e-3);
}

TEST(Kappa, IntegralFormAgreesWithTangentOnU1) {
  auto m = overdamped_builtin("U1", 1);
  auto spec = SupSearchSpec::grid1d(-1, 1, 0.5);
  McOptions a = opts(2000, 1e-3, 7);
  McOptions b = a;
  b.kappa_from_integral = true;
  auto ka = estimate_kappa_p(m, 2, 1, spec, a);
  auto kb = estimate_kappa_p(m, 2, 1, spec, b);
  EXPECT_NEAR(ka.estimate.value, kb.estimate.value, 0.01 * ka.estimate.value);
}

TEST(Kappa, SupAtZeroForU1) {
  // eta is largest at the origin, so paths started there expand most
  auto m = overdamped_builtin("U1", 1);
  auto r = estimate_kappa_p(m, 1, 0.5, SupSearchSpec::grid1d(-2, 2, 0.5), opts(4000, 1e-3, 3));
  EXPECT_NEAR(r.argmax_x[0], 0, 0.51);
  EXPECT_FALSE(r.grid_edge);
}

TEST(Kappa, ThreadCountDoesNotChangeResult) {
  auto m = overdamped_builtin("U2", 0.8);
  auto spec = SupSearchSpec::grid1d(-1, 1, 0.25);
  auto a = estimate_kappa_p(m, 2, 0.5, spec, opts(500, 1e-3, 11, 1));
  auto b = estimate_kappa_p(m, 2, 0.5, spec, opts(500, 1e-3, 11, 4));
  EXPECT_EQ(a.estimate.value, b.estimate.value);
  EXPECT_EQ(a.estimate.stderr_, b.estimate.stderr_);
  EXPECT_EQ(a.per_point, b.per_point);
}

TEST(Kappa, RejectsBadInput) {
  auto m = ornstein_uhlenbeck(1, 1, 1);
  auto spec = SupSearchSpec::grid1d(-1, 1, 0.5);
  EXPECT_THROW(estimate_kappa_p(m, 0.5, 1, spec, opts(10, 1e-3, 1)), McError);
  EXPECT_THROW(estimate_kappa_p(m, 1, 1, spec, opts(0, 1e-3, 1)), McError);
  EXPECT_THROW(estimate_kappa_p(m, 1, 1, SupSearchSpec{}, opts(10, 1e-3, 1)), McError);
  EXPECT_THROW(SupSearchSpec::grid1d(1, -1, 0.1), McError);
  Vec x = Vec::Zero(2);
  EXPECT_THROW(estimate_kappa_p(m, 1, 1, SupSearchSpec::single(x), opts(10, 1e-3, 1)), McError);
}

TEST(Gp, OrnsteinUhlenbeck) {
  auto m = ornstein_uhlenbeck(1, 1, 1);
  Vec x = Vec::Zero(1);
  auto g = estimate_Gp(m, 2, x, 3, opts(100, 1e-3, 1));
  EXPECT_NEAR(g.value, std::exp(-6.0), 1e-12);
  EXPECT_NEAR(g.stderr_, 0, 1e-15);
}

TEST(Properties, SubmultiplicativeOnU1) {
  auto m = overdamped_builtin("U1", 1);
  auto rep = check_submultiplicativity(m, 1, 0.5, 0.5, SupSearchSpec::grid1d(-2, 2, 0.25),
                                       opts(4000, 1e-3, 5));
  EXPECT_TRUE(rep.pass) << rep.kappa_ts << " vs " << rep.product;
}

TEST(Properties, MonotoneInP) {
  auto m = overdamped_builtin("U1", 1);
  auto rep = check_monotone_p(m, 1, {1, 1.5, 2, 3, 4}, SupSearchSpec::grid1d(-1, 1, 0.25),
                              opts(4000, 1e-3, 6));
  EXPECT_TRUE(rep.pass);
  EXPECT_THROW(check_monotone_p(m, 1, {2, 1}, SupSearchSpec::grid1d(-1, 1, 0.5), opts(10, 1e-3, 1)),
               McError);
}

TEST(Properties, BakryEmeryOnOrnsteinUhlenbeck) {
  auto m = ornstein_uhlenbeck(1, 1, 1);
  auto rep = check_bakry_emery(m, 2, 1, SupSearchSpec::grid1d(-1, 1, 0.5), opts(100, 1e-3, 1));
  EXPECT_TRUE(rep.bound_pass);
  EXPECT_TRUE(rep.short_time_pass);
  EXPECT_FALSE(rep.lambda_from_grid);
}

TEST(Properties, BakryEmeryOnU1UsesGridLambda) {
  auto m = overdamped_builtin("U1", 1);
  auto spec = SupSearchSpec::grid1d(-2, 2, 0.25);
  EXPECT_NEAR(grid_lambda_star(m, spec), -2, 1e-12);
  auto rep = check_bakry_emery(m, 1, 0.5, spec, opts(2000, 1e-3, 8));
  EXPECT_TRUE(rep.lambda_from_grid);
  EXPECT_TRUE(rep.bound_pass);
  EXPECT_TRUE(rep.short_time_pass) << rep.loglog_slope;
}

TEST(Lyapunov, OrnsteinUhlenbeckRate) {
  auto m = ornstein_uhlenbeck(1, 1, 1);
  auto r = estimate_lyapunov(m, 1, 4, SupSearchSpec::single(Vec::Zero(1)), opts(100, 1e-3, 1), 8);
  EXPECT_NEAR(r.rate.value, -1, 1e-3);
  EXPECT_TRUE(r.checkpoints_agree);
  EXPECT_EQ(r.times.size(), 8u);
}

TEST(LeastSquares, ExactLine) {
  auto f = least_squares({0, 1, 2, 3}, {1, 3, 5, 7});
  EXPECT_NEAR(f.slope, 2, 1e-14);
  EXPECT_NEAR(f.intercept, 1, 1e-14);
  EXPECT_NEAR(f.slope_se, 0, 1e-14);
}
