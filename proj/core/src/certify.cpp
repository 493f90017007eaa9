#include "wcontract/certify.hpp"

#include <cmath>
#include <stdexcept>

namespace wcontract {

RhoPrimeCertificate certify_rho_prime(double p, double mu_eta, double L_eta, double C1,
                                      double lambda1, double sigma_norm, double R,
                                      double mu_abs_moment, double rho) {
  if (!(C1 > 0) || !(lambda1 > 0)) throw std::invalid_argument("C1 and lambda1 must be positive");
  if (!(L_eta >= 0)) throw std::invalid_argument("L_eta must be nonnegative");
  if (!(p >= 1)) throw std::invalid_argument("p must be >= 1");
  RhoPrimeCertificate out;
  out.A = std::exp(p * L_eta * C1 / lambda1 * (R + mu_abs_moment));
  out.rho_prime = -p * mu_eta -
                  sigma_norm * sigma_norm * C1 * C1 * p * p * L_eta * L_eta / (lambda1 * lambda1);
  out.contracts = out.rho_prime > 0 && rho > 0;
  out.rate = out.contracts ? std::min(rho, out.rho_prime) : 0;
  return out;
}

double EtaBar::of_radius(double u) const {
  if (u <= S) return delta;
  if (u >= S2) return -delta / q;
  return delta * (1 - (1 + 1 / q) * (u - S) / (S2 - S));
}

double EtaBar::operator()(const Vec& y) const { return of_radius((Q_inv_half * y).norm()); }

double EtaBar::lipschitz() const { return delta * (1 + 1 / q) / (S2 - S); }

EtaBar eta_bar_construct(double delta, double q, double S, double S2, const Mat& Q) {
  if (!(S > 0) || !(S2 > S)) throw std::invalid_argument("need S2 > S > 0");
  if (!(delta > 0) || !(q > 0)) throw std::invalid_argument("delta and q must be positive");
  MetricChange mc = make_metric(Q, 1, 1);
  EtaBar e;
  e.delta = delta;
  e.q = q;
  e.S = S;
  e.S2 = S2;
  e.Q_inv_half = mc.Q_inv_half;
  return e;
}

MassBound elliptic_mass_bound(double K, double R, double R2, double theta, double d) {
  if (!(R > 0) || !(R2 > R)) throw std::invalid_argument("need R2 > R > 0");
  if (!(K > 0) || !(theta > 0) || !(d > 0)) throw std::invalid_argument("K, theta and d must be positive");
  MassBound mb;
  double th2 = theta * theta;
  mb.C = (K + th2 / (2 * (R2 * R2 - R * R))) * R2 * R2 * std::exp(K * R * R / th2);
  mb.eps = th2 * d / 2;
  mb.q = mb.eps / (mb.C + mb.eps);
  return mb;
}

std::optional<KineticMatrix> kinetic_matrix(double ell, double Lambda, double gamma, int d) {
  if (!(ell > 0) || !(Lambda >= ell)) throw std::invalid_argument("need Lambda >= ell > 0");
  if (!(gamma > 0)) throw std::invalid_argument("gamma must be positive");
  if (d < 1) throw std::invalid_argument("d must be positive");
  if (gamma * gamma < 4 * Lambda) return std::nullopt;
  KineticMatrix km;
  km.a = 1 / Lambda;
  km.c = 1 / gamma;
  km.rho = ell / (3 * gamma);
  if (!(km.a > km.c * km.c)) throw std::logic_error("kinetic matrix is not positive definite");
  km.M = Mat::Zero(2 * d, 2 * d);
  for (int i = 0; i < d; ++i) {
    km.M(i, i) = 1;
    km.M(i, d + i) = km.M(d + i, i) = km.c;
    km.M(d + i, d + i) = km.a;
  }
  return km;
}

double kinetic_kappa_inf_rate(double gamma, double xi0) {
  if (!(gamma > 0)) throw std::invalid_argument("gamma must be positive");
  if (xi0 < gamma * gamma / 4) return std::sqrt(gamma * gamma / 4 - xi0) - gamma / 2;
  return -gamma / 2;
}

}  // namespace wcontract
