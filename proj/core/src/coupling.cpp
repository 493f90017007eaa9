#include "wcontract/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

#include "wcontract/mc.hpp"
#include "wcontract/parallel.hpp"
#include "wcontract/rng.hpp"

namespace wcontract {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double smoothstep(double t) { return t * t * (3 - 2 * t); }
// int_0^t smoothstep
double smoothstep_int(double t) { return t * t * t - 0.5 * t * t * t * t; }
// int_0^t int_0^u smoothstep
double smoothstep_int2(double t) {
  double t4 = t * t * t * t;
  return 0.25 * t4 - 0.1 * t4 * t;
}
double smootherstep(double t) { return t * t * t * (t * (6 * t - 15) + 10); }

double simpson_rec(const std::function<double(double)>& f, double a, double b, double fa,
                   double fm, double fb, double whole, double tol, int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6 * (fa + 4 * flm + fm);
  double right = (b - m) / 6 * (fm + 4 * frm + fb);
  double diff = left + right - whole;
  if (depth <= 0 || std::fabs(diff) <= 15 * tol) return left + right + diff / 15;
  return simpson_rec(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol) {
  if (b <= a) return 0;
  double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  double whole = (b - a) / 6 * (fa + 4 * fm + fb);
  return simpson_rec(f, a, b, fa, fm, fb, whole, tol, 40);
}

}  // namespace

//---------------------------------------------------------------------------//
// Parameters and constants
//---------------------------------------------------------------------------//

void CouplingParams::validate() const {
  auto pos = [](double v, const char* name) {
    if (!(v > 0)) throw std::invalid_argument(std::string(name) + " must be positive");
  };
  pos(rho1, "rho1");
  pos(L1, "L1");
  pos(L2, "L2");
  pos(L3, "L3");
  pos(theta, "theta");
  pos(metric.rho2, "rho2");
  pos(metric.S_star, "S*");
  if (!(xi > 0 && xi <= 1)) throw std::invalid_argument("xi must lie in (0, 1]");
  if (!(p >= 1)) throw std::invalid_argument("p must be >= 1");
  if (metric.Q.rows() == 0) throw std::invalid_argument("metric Q is empty");
  if (m < 1 || m > metric.Q.rows()) throw std::invalid_argument("z-block size out of range");
}

CouplingParams CouplingParams::from_model(const DriftModel& model, double p, double xi) {
  if (!model.decomposition || !model.metric)
    throw std::invalid_argument("model has no (y, z) decomposition or metric change");
  const auto& d = *model.decomposition;
  CouplingParams cp;
  cp.rho1 = d.rho1;
  cp.L1 = d.L1;
  cp.L2 = d.L2;
  cp.L3 = d.L3;
  cp.theta = d.theta;
  cp.metric = *model.metric;
  cp.m = d.m;
  cp.p = p;
  cp.xi = xi;
  return cp;
}

std::vector<std::pair<std::string, double>> ContractionConstants::table() const {
  return {{"M", M},         {"rho3", rho3},     {"L4", L4},       {"S1s", S1s},
          {"gamma1", gamma1}, {"gamma2", gamma2}, {"C0", C0},       {"Rs", Rs},
          {"R1s", R1s},     {"S2s", S2s},       {"eps", eps},     {"c0", c0},
          {"K1", K1},       {"K2", K2},         {"K3", K3},       {"cstar", cstar},
          {"kstar", kstar}, {"Kstar", Kstar},   {"Cp", Cp},       {"lambdap", lambdap}};
}

double f_printed(double r, const ContractionConstants& c) {
  double k = c.L4 / (2 * c.theta * c.theta);
  return (1 - std::exp(-k * std::min(r, c.R1s))) / k;
}

double g_printed(double s, const ContractionConstants& c) {
  if (s <= c.S_star) return 0;
  if (s <= c.S2s) return c.eps / 2 * (s - c.S_star) * (s - c.S_star);
  return std::pow(s - c.S2s, c.p) + c.eps / 2 * (c.S2s - c.S_star) * (c.S2s - c.S_star);
}

// The chain runs in extended precision: exp(-L4 R1*^2 / (2 theta^2)) has an
// argument of order 100 for moderate parameters, which would otherwise cost
// about two decimal digits.
ContractionConstants compute_constants(const CouplingParams& prm) {
  using R = long double;
  prm.validate();
  ContractionConstants c;
  const R th2 = R(prm.theta) * prm.theta;
  const R p = prm.p;
  const R Ss = prm.metric.S_star;
  const R rho2 = prm.metric.rho2;
  const R rho1 = prm.rho1, L1 = prm.L1, L2 = prm.L2, L3 = prm.L3;
  c.theta = prm.theta;
  c.p = prm.p;
  c.S_star = prm.metric.S_star;
  c.rho2 = prm.metric.rho2;
  c.norm_Q = prm.metric.norm_Q();
  c.norm_Q_inv = prm.metric.norm_Q_inv();
  c.norm_Q_inv_half = prm.metric.norm_Q_inv_half();
  c.norm_Q22 = prm.use_Q_norm ? c.norm_Q : prm.metric.norm_Q22(prm.m);
  const R Q22 = c.norm_Q22, Qn = c.norm_Q, Qih = c.norm_Q_inv_half, Qinv = c.norm_Q_inv;

  const R M = 2 * L2 / rho1;
  const R rho3 = rho1 / (4 * (1 + rho1 / (4 * (L3 + L1 * M))));
  const R L4 = (L3 + L1 * M + rho3) / 8;
  const R S1s = Ss + 16 * Q22 * th2 / (Ss * rho2);
  const R gamma1 = std::min(M, R(1)) * std::sqrt(1 / (2 * Qinv));
  const R gamma2 = std::max(1 / M, R(1)) * std::sqrt(Qn);
  const R C0 = gamma2 * (M + 1) / 2;
  const R Rs = Ss / gamma2;
  const R R1s = S1s / gamma1;
  const R S2s = std::max(gamma2 * R1s, S1s);
  // R1*^2 without the rounding of gamma1
  const R R1s2 = S1s * S1s * 2 * Qinv / (std::min(M, R(1)) * std::min(M, R(1)));
  const R log_fpR1 = -L4 * R1s2 / (2 * th2);
  const R fpR1 = std::exp(log_fpR1);
  const R eps_factor = rho3 * Rs / (16 * Q22 * th2);
  const R eps = eps_factor * fpR1;
  const R c0 = 8 * Q22 * eps * th2 / Ss;

  const R kf = L4 / (2 * th2);
  auto f = [&](R r) { return (1 - std::exp(-kf * std::min(r, R1s))) / kf; };
  auto g = [&](R s) -> R {
    if (s <= Ss) return 0;
    if (s <= S2s) return eps / 2 * (s - Ss) * (s - Ss);
    return std::pow(s - S2s, p) + eps / 2 * (S2s - Ss) * (S2s - Ss);
  };

  const R fR1 = f(R1s);
  const R K1 = 1 + (fR1 + g(S2s)) / std::pow(S2s, p) + eps * (S2s - Ss) / std::pow(S2s, p - 1);
  const R K2 = (fR1 + g(2 * (S2s + 1))) / S1s;
  const R K3 = 1 + std::sqrt(Qn) * std::max(1 / M, R(1)) * g(S1s) / Ss;
  const R cs1 = p * rho2 / (std::pow(R(2), p) * K1), cs2 = c0 / K2, cs3 = rho3 / (2 * K3) * fpR1;
  const R cstar = std::min({cs1, cs2, cs3});
  const R R0s = R1s;
  const R ks1 = std::pow(2 * Qih, p) * std::min(R(1), std::pow(2 * S2s, p - 1));
  const R ks2_factor = std::min(Qih, std::pow(Qih, p) / std::pow(2 * S2s, p - 1)) / (2 * S2s);
  const R ks3_factor = std::min(std::pow(M, p), R(1)) / std::max(R(1), std::pow(R0s, p - 1));
  const R kstar = std::min({ks1, g(S1s) * ks2_factor, fpR1 * ks3_factor});
  const R Kstar = std::max({K1 * std::pow(Qn, p / 2), K2 * std::sqrt(Qn),
                            std::sqrt(R(2)) * K3 * std::max(M, R(1))});

  c.M = M;
  c.rho3 = rho3;
  c.L4 = L4;
  c.S1s = S1s;
  c.gamma1 = gamma1;
  c.gamma2 = gamma2;
  c.C0 = C0;
  c.Rs = Rs;
  c.R1s = R1s;
  c.S2s = S2s;
  c.fprime_R1 = fpR1;
  c.eps = eps;
  c.c0 = c0;
  c.K1 = K1;
  c.K2 = K2;
  c.K3 = K3;
  c.cstar = cstar;
  c.kstar = kstar;
  c.Kstar = Kstar;
  c.Cp = Kstar / kstar;
  c.lambdap = c.cstar;

  // logs stay finite when f'(R1*) underflows
  c.log_fprime_R1 = log_fpR1;
  const R log_eps = std::log(eps_factor) + log_fpR1;
  c.log_eps = log_eps;
  const R log_c0 = std::log(8 * Q22 * th2 / Ss) + log_eps;
  c.log_lambdap = std::min({std::log(cs1), log_c0 - std::log(K2), std::log(rho3 / (2 * K3)) + log_fpR1});
  const R log_gS1 = log_eps + std::log((S1s - Ss) * (S1s - Ss) / 2);
  c.log_kstar = std::min({std::log(ks1), log_gS1 + std::log(ks2_factor), log_fpR1 + std::log(ks3_factor)});
  c.log_Cp = std::log(Kstar) - c.log_kstar;
  return c;
}

double f_prime(double r, const ContractionConstants& c) {
  if (r >= c.R1s) return 0;
  return std::exp(-c.L4 * r * r / (2 * c.theta * c.theta));
}

double f_eval(double r, const ContractionConstants& c) {
  double x = std::min(std::max(r, 0.0), c.R1s);
  return c.theta * std::sqrt(M_PI / (2 * c.L4)) * std::erf(x * std::sqrt(c.L4 / 2) / c.theta);
}

double g_eval(double s, const ContractionConstants& c) {
  if (s <= c.S_star) return 0;
  if (s <= c.S2s) return c.eps / 2 * (s - c.S_star) * (s - c.S_star);
  double u = s - c.S2s;
  return c.eps / 2 * (c.S2s - c.S_star) * (c.S2s - c.S_star) + c.eps * (c.S2s - c.S_star) * u +
         std::pow(u, c.p);
}

double g_prime(double s, const ContractionConstants& c) {
  if (s <= c.S_star) return 0;
  if (s <= c.S2s) return c.eps * (s - c.S_star);
  double u = s - c.S2s;
  return c.eps * (c.S2s - c.S_star) + c.p * std::pow(u, c.p - 1);
}

//---------------------------------------------------------------------------//
// Smoothed functions
//---------------------------------------------------------------------------//

CouplingFunctions::CouplingFunctions(const ContractionConstants& c, double xi) : c_(c), xi_(xi) {
  if (!(xi > 0 && xi <= 1)) throw std::invalid_argument("xi must lie in (0, 1]");
  if (c.S2s < c.S_star + xi) throw std::invalid_argument("xi too large for the g construction");

  // h(x^2) on [xi^2/4, xi/2]: slope ramps 0 -> hc, plateau, ramps hc -> 1,
  // with area fixed so that h(x^2) reaches x at x = xi/2.
  ha_ = xi * xi / 4;
  hb_ = xi / 2;
  double ratio = hb_ / (hb_ - ha_);
  hc_ = 1 + 2 * xi;
  hdelta_ = (hc_ - ratio) / (hc_ - 0.5);

  // alpha on [R1*, R1* + xi/2]: quintic Hermite from (theta, 0, 0) to the
  // value and derivatives of theta (r - R1* - xi)^2 at r = R1* + xi/2.
  double l = xi / 2, th = c.theta;
  double y0 = th, d0 = 0, s0 = 0;
  double y1 = th * xi * xi / 4, d1 = -th * xi * l, s1 = 2 * th * l * l;
  // coefficients of sum a_k t^k
  acoef_[0] = y0;
  acoef_[1] = d0;
  acoef_[2] = s0 / 2;
  acoef_[3] = -10 * y0 - 6 * d0 - 1.5 * s0 + 10 * y1 - 4 * d1 + 0.5 * s1;
  acoef_[4] = 15 * y0 + 8 * d0 + 1.5 * s0 - 15 * y1 + 7 * d1 - s1;
  acoef_[5] = -6 * y0 - 3 * d0 - 0.5 * s0 + 6 * y1 - 3 * d1 + 0.5 * s1;

  f_R1_ = f_eval(c.R1s, c);

  // g knots
  const double e = c.eps, S = c.S_star;
  gpA_ = e * xi / 2;
  gA_ = e * xi * xi * smoothstep_int2(1.0);
  double u = c.S2s - S - xi;
  gpB_ = gpA_ + e * u;
  gB_ = gA_ + gpA_ * u + e / 2 * u * u;
  gpC_ = gpB_ + e * xi * (1 - smoothstep_int(1.0));
  gC_ = gB_ + gpB_ * xi + e * xi * xi * (0.5 - smoothstep_int2(1.0));
}

double CouplingFunctions::H(double x) const {
  if (x <= ha_) return 0;
  if (x >= hb_) return x;
  const double L = hb_ - ha_, t = (x - ha_) / L, dl = hdelta_;
  double W = hc_ * dl * smoothstep_int(std::min(t / dl, 1.0)) + hc_ * std::max(t - dl, 0.0) -
             (hc_ - 1) * dl * smoothstep_int(std::max((t - 1 + dl) / dl, 0.0));
  return L * W;
}

double CouplingFunctions::H_prime(double x) const {
  if (x <= ha_) return 0;
  if (x >= hb_) return 1;
  const double t = (x - ha_) / (hb_ - ha_), dl = hdelta_;
  return hc_ * smoothstep(std::min(t / dl, 1.0)) -
         (hc_ - 1) * smoothstep(std::max((t - 1 + dl) / dl, 0.0));
}

double CouplingFunctions::chi(double r2) const {
  double r = std::sqrt(std::max(r2, 0.0));
  if (r <= xi_ / 2) return 0;
  if (r >= xi_) return 1;
  return smootherstep((r - xi_ / 2) / (xi_ / 2));
}

double CouplingFunctions::alpha(double r) const {
  const double R1 = c_.R1s;
  if (r <= R1) return c_.theta;
  if (r >= R1 + xi_) return 0;
  if (r >= R1 + xi_ / 2) {
    double u = r - R1 - xi_;
    return c_.theta * u * u;
  }
  double t = (r - R1) / (xi_ / 2);
  const double* a = acoef_;
  return a[0] + t * (a[1] + t * (a[2] + t * (a[3] + t * (a[4] + t * a[5]))));
}

double CouplingFunctions::beta(double dy2, double dz2) const {
  if (dz2 <= xi_ * xi_ / 4) return 0;
  double ch = chi(dz2);
  if (ch == 0) return 0;
  return ch * alpha(R(dy2, dz2));
}

double CouplingFunctions::taper_integral(double r) const {
  const double R1 = c_.R1s, th2 = c_.theta * c_.theta;
  const double mid = R1 + xi_ / 2, end = R1 + xi_;
  double a = std::min(r, mid);
  double I = adaptive_simpson([&](double s) {
    double al = alpha(s);
    return s / (al * al);
  }, R1, a, 1e-10);
  if (r > mid) {
    // closed form of int s / (theta^2 (end - s)^4) ds
    double u1 = end - mid, u2 = end - r;
    if (u2 <= 0) return std::numeric_limits<double>::infinity();
    I += (end * (std::pow(u2, -3) - std::pow(u1, -3)) / 3 - (std::pow(u2, -2) - std::pow(u1, -2)) / 2) / th2;
  }
  return I;
}

double CouplingFunctions::f_prime(double r) const {
  const double R1 = c_.R1s, th2 = c_.theta * c_.theta;
  if (r <= R1) return std::exp(-c_.L4 * r * r / (2 * th2));
  if (r >= R1 + xi_) return 0;
  return std::exp(-c_.L4 * (R1 * R1 / (2 * th2) + taper_integral(r)));
}

double CouplingFunctions::f(double r) const {
  const double R1 = c_.R1s;
  if (r <= R1) return f_eval(r, c_);
  if (c_.fprime_R1 == 0) return f_R1_;
  double top = std::min(r, R1 + xi_);
  return f_R1_ + adaptive_simpson([&](double s) { return f_prime(s); }, R1, top, 1e-12);
}

double CouplingFunctions::g(double s) const {
  const double S = c_.S_star, e = c_.eps, xi = xi_;
  if (s <= S) return 0;
  if (s <= S + xi) return e * xi * xi * smoothstep_int2((s - S) / xi);
  if (s <= c_.S2s) {
    double u = s - S - xi;
    return gA_ + gpA_ * u + e / 2 * u * u;
  }
  if (s <= c_.S2s + xi) {
    double t = (s - c_.S2s) / xi;
    return gB_ + gpB_ * xi * t + e * xi * xi * (t * t / 2 - smoothstep_int2(t));
  }
  double u = s - c_.S2s - xi;
  return gC_ + gpC_ * u + std::pow(u, c_.p);
}

double CouplingFunctions::g_prime(double s) const {
  const double S = c_.S_star, e = c_.eps, xi = xi_;
  if (s <= S) return 0;
  if (s <= S + xi) return e * xi * smoothstep_int((s - S) / xi);
  if (s <= c_.S2s) return gpA_ + e * (s - S - xi);
  if (s <= c_.S2s + xi) {
    double t = (s - c_.S2s) / xi;
    return gpB_ + e * xi * (t - smoothstep_int(t));
  }
  double u = s - c_.S2s - xi;
  return gpC_ + c_.p * std::pow(u, c_.p - 1);
}

double CouplingFunctions::g_second(double s) const {
  const double S = c_.S_star, e = c_.eps, xi = xi_;
  if (s <= S) return 0;
  if (s <= S + xi) return e * smoothstep((s - S) / xi);
  if (s <= c_.S2s) return e;
  if (s <= c_.S2s + xi) return e * (1 - smoothstep((s - c_.S2s) / xi));
  double u = s - c_.S2s - xi;
  if (c_.p == 1) return 0;
  return c_.p * (c_.p - 1) * std::pow(u, c_.p - 2);
}

double beta_eval(const Vec& x, const Vec& xp, int n, const ContractionConstants& c, double xi) {
  if (x.size() != xp.size() || n < 0 || n >= x.size())
    throw std::invalid_argument("beta_eval: inconsistent block sizes");
  CouplingFunctions fn(c, xi);
  Vec d = x - xp;
  return fn.beta(d.head(n).squaredNorm(), d.tail(d.size() - n).squaredNorm());
}

//---------------------------------------------------------------------------//
// Coupled simulation
//---------------------------------------------------------------------------//

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// [ (0; s I_m) | sigma_tilde ]; the sigma_tilde columns are dropped when it vanishes.
RowMat coupling_sigma(const StateDecomposition& dec, double s) {
  const int d = dec.n + dec.m;
  const bool residual = dec.sigma_tilde.size() > 0 && dec.sigma_tilde.cwiseAbs().maxCoeff() > 0;
  const int k = residual ? dec.m + d : dec.m;
  RowMat sig = RowMat::Zero(d, k);
  for (int j = 0; j < dec.m; ++j) sig(dec.n + j, j) = s;
  if (residual) sig.rightCols(d) = dec.sigma_tilde;
  return sig;
}

struct PairOutcome {
  bool divergent = false;
  double max_dev = 0;
  long fallback = 0;
  long reflecting = 0;
};

//! Runs one coupled pair for `steps` steps of size h; calls at(step, x, xp)
//! whenever step is the next entry of checkpoint_steps.
template <class AtCheckpoint>
PairOutcome run_pair(const DriftModel& model, const CouplingFunctions& fn, double* x, double* xp,
                     double h, long steps, const std::vector<long>& checkpoint_steps,
                     std::uint64_t seed, std::uint64_t index, bool force_sync, AtCheckpoint&& at) {
  const StateDecomposition& dec = *model.decomposition;
  const int n = dec.n, m = dec.m, d = n + m;
  const double theta = dec.theta, th2 = theta * theta;
  const double sqh = std::sqrt(h);
  RowMat sig = coupling_sigma(dec, theta);
  const int k = static_cast<int>(sig.cols());
  RngStream rng(seed, index, 0), rngB(seed, index, 1);
  std::vector<double> xi(k), xiB(m), e(m), refl(m), noise(d), noisep(d), b(d), bp(d);
  std::vector<double> E(m * m), E2(m * m);
  PairOutcome out;
  std::size_t c = 0;
  while (c < checkpoint_steps.size() && checkpoint_steps[c] == 0) at(c++, x, xp);
  for (long step = 1; step <= steps; ++step) {
    double dy2 = 0, dz2 = 0;
    for (int i = 0; i < n; ++i) dy2 += (x[i] - xp[i]) * (x[i] - xp[i]);
    for (int i = n; i < d; ++i) dz2 += (x[i] - xp[i]) * (x[i] - xp[i]);
    double beta = force_sync ? 0.0 : fn.beta(dy2, dz2);

    rng.normals(xi.data(), k);
    if (beta == 0) {
      sig.block(n, 0, m, m).diagonal().setConstant(theta);
    } else {
      sig.block(n, 0, m, m).diagonal().setConstant(std::sqrt(th2 - beta * beta));
    }
    noise_product(sig.data(), d, k, xi.data(), noise.data());
    std::copy(noise.begin(), noise.end(), noisep.begin());

    if (dz2 == 0) ++out.fallback;
    if (beta != 0) {
      ++out.reflecting;
      rngB.normals(xiB.data(), m);
      double nz = std::sqrt(dz2);
      for (int j = 0; j < m; ++j) e[j] = nz > 0 ? (x[n + j] - xp[n + j]) / nz : (j == 0 ? 1.0 : 0.0);
      // (I - 2 e e^T) xiB
      double ex = 0;
      for (int j = 0; j < m; ++j) ex += e[j] * xiB[j];
      for (int j = 0; j < m; ++j) refl[j] = xiB[j] - 2 * e[j] * ex;
      for (int j = 0; j < m; ++j) {
        noise[n + j] += beta * xiB[j];
        noisep[n + j] += beta * refl[j];
      }
      // beta^2 (I - 2ee^T)^2 + (theta^2 - beta^2) I against theta^2 I
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) E[i * m + j] = (i == j ? 1.0 : 0.0) - 2 * e[i] * e[j];
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
          double acc = 0;
          for (int l = 0; l < m; ++l) acc += E[i * m + l] * E[l * m + j];
          double v = beta * beta * acc + (i == j ? th2 - beta * beta : 0.0) - (i == j ? th2 : 0.0);
          out.max_dev = std::max(out.max_dev, std::fabs(v));
        }
    }
    model.drift(x, b.data());
    model.drift(xp, bp.data());
    apply_increment(x, b.data(), noise.data(), d, h, sqh);
    apply_increment(xp, bp.data(), noisep.data(), d, h, sqh);
    if (diverged(x, d) || diverged(xp, d)) {
      out.divergent = true;
      return out;
    }
    while (c < checkpoint_steps.size() && checkpoint_steps[c] == step) at(c++, x, xp);
  }
  return out;
}

void require_structure(const DriftModel& model) {
  if (!model.decomposition) throw std::invalid_argument("model has no (y, z) decomposition");
  const auto& dec = *model.decomposition;
  if (dec.n + dec.m != model.dim) throw std::invalid_argument("decomposition sizes do not match the model");
}

}  // namespace

DriftModel coupling_noise_model(const DriftModel& model) {
  require_structure(model);
  DriftModel out = model;
  out.sigma = coupling_sigma(*model.decomposition, model.decomposition->theta);
  return out;
}

CoupledPair simulate_pair(const DriftModel& model, const CouplingFunctions& fn, const Vec& x0,
                          const Vec& x0p, double T, double dt, std::uint64_t seed,
                          std::uint64_t index, bool force_synchronous) {
  require_structure(model);
  if (x0.size() != model.dim || x0p.size() != model.dim)
    throw std::invalid_argument("initial state has the wrong dimension");
  const long steps = step_count(T, dt);
  CoupledPair res;
  res.x = x0;
  res.xp = x0p;
  auto o = run_pair(model, fn, res.x.data(), res.xp.data(), T / steps, steps, {}, seed, index,
                    force_synchronous, [](std::size_t, const double*, const double*) {});
  res.divergent = o.divergent;
  res.max_orthogonality_dev = o.max_dev;
  res.fallback_count = o.fallback;
  return res;
}

CouplingTrace simulate_coupling(const DriftModel& model, const ContractionConstants& c,
                                const Vec& x0, const Vec& x0p, const CouplingOptions& opts) {
  require_structure(model);
  if (!model.metric) throw std::invalid_argument("model has no metric change");
  if (x0.size() != model.dim || x0p.size() != model.dim)
    throw std::invalid_argument("initial state has the wrong dimension");
  if (opts.N < 1) throw std::invalid_argument("N must be positive");
  if (opts.checkpoints < 2) throw std::invalid_argument("need at least 2 checkpoints");
  if (opts.batches < 2 || opts.batches > opts.N) throw std::invalid_argument("batches must lie in [2, N]");
  const CouplingFunctions fn(c, opts.xi);
  const long steps = step_count(opts.T, opts.dt);
  const double h = opts.T / steps;
  const int K = opts.checkpoints;
  std::vector<long> cps;
  for (int j = 0; j <= K; ++j) cps.push_back(std::lround(static_cast<double>(j) * steps / K));
  cps.erase(std::unique(cps.begin(), cps.end()), cps.end());
  const std::size_t C = cps.size();
  const int d = model.dim, n = model.decomposition->n;
  const Mat Qh = model.metric->Q_half;
  const double p = c.p;

  // per pair, per checkpoint: f(R), g(S), omega
  std::vector<double> vals(static_cast<std::size_t>(opts.N) * C * 3, kNaN);
  std::vector<PairOutcome> outcomes(opts.N);
  parallel_for(opts.N, opts.threads, [&](std::size_t i) {
    Vec x = x0, xp = x0p, dlt(d);
    double* row = vals.data() + i * C * 3;
    outcomes[i] = run_pair(model, fn, x.data(), xp.data(), h, steps, cps, opts.seed, i,
                           opts.force_synchronous, [&](std::size_t ci, const double* a, const double* b) {
      double dy2 = 0, dz2 = 0;
      for (int j = 0; j < d; ++j) {
        dlt[j] = a[j] - b[j];
        (j < n ? dy2 : dz2) += dlt[j] * dlt[j];
      }
      double S = (Qh * dlt).norm();
      double nrm = std::sqrt(dy2 + dz2);
      row[ci * 3 + 0] = fn.f(fn.R(dy2, dz2));
      row[ci * 3 + 1] = fn.g(S);
      row[ci * 3 + 2] = std::max(nrm, std::pow(nrm, p));
    });
  });

  CouplingTrace tr;
  tr.N = opts.N;
  for (long s : cps) tr.times.push_back(s * h);
  for (const auto& o : outcomes) {
    if (o.divergent) ++tr.excluded;
    tr.max_orthogonality_dev = std::max(tr.max_orthogonality_dev, o.max_dev);
    tr.fallback_count += o.fallback;
    tr.reflecting_steps += o.reflecting;
  }
  if (tr.excluded == opts.N) throw std::runtime_error("all coupled pairs diverged");

  auto moments = [&](long lo, long hi, std::size_t ci, int which, double& mean, double& se) {
    double s1 = 0, s2 = 0;
    long cnt = 0;
    for (long i = lo; i < hi; ++i) {
      if (outcomes[i].divergent) continue;
      const double* row = vals.data() + i * C * 3 + ci * 3;
      double v = which < 3 ? row[which] : row[0] + row[1];
      s1 += v;
      s2 += v * v;
      ++cnt;
    }
    mean = cnt ? s1 / cnt : kNaN;
    double var = cnt > 1 ? std::max(0.0, (s2 - s1 * s1 / cnt) / (cnt - 1)) : 0;
    se = cnt ? std::sqrt(var / cnt) : kNaN;
  };
  tr.mean_f.resize(C);
  tr.se_f.resize(C);
  tr.mean_g.resize(C);
  tr.se_g.resize(C);
  tr.mean_omega.resize(C);
  tr.se_omega.resize(C);
  tr.mean_fg.resize(C);
  tr.se_fg.resize(C);
  for (std::size_t ci = 0; ci < C; ++ci) {
    moments(0, opts.N, ci, 0, tr.mean_f[ci], tr.se_f[ci]);
    moments(0, opts.N, ci, 1, tr.mean_g[ci], tr.se_g[ci]);
    moments(0, opts.N, ci, 2, tr.mean_omega[ci], tr.se_omega[ci]);
    moments(0, opts.N, ci, 3, tr.mean_fg[ci], tr.se_fg[ci]);
  }

  const double t_from = opts.fit_from * opts.T - 1e-12;
  auto fit_rate = [&](long lo, long hi, int* used) {
    std::vector<double> ts, ys;
    for (std::size_t ci = 0; ci < C; ++ci) {
      if (tr.times[ci] < t_from) continue;
      double mean, se;
      moments(lo, hi, ci, 3, mean, se);
      if (!(mean > 0)) continue;
      ts.push_back(tr.times[ci]);
      ys.push_back(std::log(mean));
    }
    if (used) *used = static_cast<int>(ts.size());
    if (ts.size() < 2) return kNaN;
    return -least_squares(ts, ys).slope;
  };
  tr.rate = fit_rate(0, opts.N, &tr.fit_points);
  std::vector<double> brates;
  for (int bI = 0; bI < opts.batches; ++bI) {
    long lo = opts.N * bI / opts.batches, hi = opts.N * (bI + 1) / opts.batches;
    double r = fit_rate(lo, hi, nullptr);
    if (std::isfinite(r)) brates.push_back(r);
  }
  if (brates.size() >= 2) {
    double mu = 0;
    for (double r : brates) mu += r;
    mu /= brates.size();
    double v = 0;
    for (double r : brates) v += (r - mu) * (r - mu);
    v /= (brates.size() - 1);
    tr.rate_se = std::sqrt(v / brates.size());
  } else {
    tr.rate_se = kNaN;
  }
  if (tr.fit_points < 2)
    tr.warning = "fewer than two positive checkpoints in the fit window";
  else if (static_cast<int>(brates.size()) < opts.batches)
    tr.warning = "some batches had fewer than two positive checkpoints; their fits were skipped";
  return tr;
}

}  // namespace wcontract
