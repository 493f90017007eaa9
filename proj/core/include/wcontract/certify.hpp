#pragma once

#include <functional>
#include <optional>

#include "wcontract/model.hpp"

namespace wcontract {

struct RhoPrimeCertificate {
  double A = 0;
  double rho_prime = 0;
  //! min(rho, rho') when both are positive.
  double rate = 0;
  bool contracts = false;
};

//! Prefactor A and rate rho' bounding G_p* from a W1 contraction (C1, lambda1).
//! rho is the pointwise contraction rate at infinity of eta.
RhoPrimeCertificate certify_rho_prime(double p, double mu_eta, double L_eta, double C1,
                                      double lambda1, double sigma_norm, double R,
                                      double mu_abs_moment, double rho = 0);

//! Three-piece curvature bound in u = |Q^{-1/2} y|: delta for u <= S,
//! linear for S < u < S2, -delta/q for u >= S2.
struct EtaBar {
  double delta = 0, q = 0, S = 0, S2 = 0;
  Mat Q_inv_half;
  double operator()(const Vec& y) const;
  double of_radius(double u) const;
  //! Lipschitz constant in u.
  double lipschitz() const;
};

EtaBar eta_bar_construct(double delta, double q, double S, double S2, const Mat& Q);

struct MassBound {
  double C = 0;
  double eps = 0;
  double q = 0;
};

//! Lyapunov-function bound on the invariant mass outside B(0, R2) for
//! sigma = theta Id in dimension d.
MassBound elliptic_mass_bound(double K, double R, double R2, double theta, double d);

struct KineticMatrix {
  double a = 0, c = 0, rho = 0;
  Mat M;  //!< [[I, cI], [cI, aI]] of size 2d
};

//! Returns nothing when gamma^2 < 4 Lambda (case not covered).
std::optional<KineticMatrix> kinetic_matrix(double ell, double Lambda, double gamma, int d = 1);

//! Lower bound on the asymptotic rate of the p -> infinity contraction
//! coefficient for kinetic Langevin, from the infimum xi0 of the Hessian spectrum.
double kinetic_kappa_inf_rate(double gamma, double xi0);

}  // namespace wcontract
