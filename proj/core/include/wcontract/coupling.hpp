#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wcontract/model.hpp"
#include "wcontract/sde.hpp"

namespace wcontract {

struct CouplingParams {
  double rho1 = 0, L1 = 0, L2 = 0, L3 = 0;
  double theta = 0;
  MetricChange metric;
  //! Size of the z-block (selects Q22).
  int m = 1;
  double p = 1;
  //! Regularization width used by the simulator; constants use the xi -> 0 limit.
  double xi = 1e-3;
  //! Replace |Q22| by |Q| in eps and c0.
  bool use_Q_norm = false;

  void validate() const;
  static CouplingParams from_model(const DriftModel& model, double p, double xi = 1e-3);
};

struct ContractionConstants {
  double M = 0, rho3 = 0, L4 = 0, S1s = 0, gamma1 = 0, gamma2 = 0, C0 = 0, Rs = 0, R1s = 0,
         S2s = 0, eps = 0, c0 = 0, K1 = 0, K2 = 0, K3 = 0, cstar = 0, kstar = 0, Kstar = 0,
         Cp = 0, lambdap = 0;
  // intermediates
  double fprime_R1 = 0;
  //! Natural logs of the quantities that scale with f'(R1*) and underflow
  //! for large R1*.
  double log_fprime_R1 = 0, log_eps = 0, log_lambdap = 0, log_kstar = 0, log_Cp = 0;
  double norm_Q = 0, norm_Q_inv = 0, norm_Q_inv_half = 0, norm_Q22 = 0;
  // echoed inputs
  double theta = 0, p = 1, S_star = 0, rho2 = 0;

  //! (name, value) pairs in the order of the constants table.
  std::vector<std::pair<std::string, double>> table() const;
};

ContractionConstants compute_constants(const CouplingParams& params);

//! f and g exactly as listed with the closed-form constants.
double f_printed(double r, const ContractionConstants& c);
double g_printed(double s, const ContractionConstants& c);

//! xi -> 0 limits of the functions used in the contraction argument:
//! f' = exp(-L4 r^2 / (2 theta^2)) up to R1*, f constant afterwards;
//! g is C^1 with quadratic then p-th power growth.
double f_eval(double r, const ContractionConstants& c);
double f_prime(double r, const ContractionConstants& c);
double g_eval(double s, const ContractionConstants& c);
double g_prime(double s, const ContractionConstants& c);

//! Smoothed functions at regularization xi > 0.
class CouplingFunctions {
 public:
  CouplingFunctions(const ContractionConstants& c, double xi);

  //! h(u) with u = x^2.
  double h(double u) const { return H(std::sqrt(u)); }
  //! h(x^2) as a function of x >= 0.
  double H(double x) const;
  //! d/dx h(x^2).
  double H_prime(double x) const;
  double chi(double r2) const;
  double alpha(double r) const;
  double f(double r) const;
  double f_prime(double r) const;
  double g(double s) const;
  double g_prime(double s) const;
  double g_second(double s) const;
  //! beta from squared block distances.
  double beta(double dy2, double dz2) const;
  //! R = M h(dy2) + h(dz2).
  double R(double dy2, double dz2) const { return c_.M * h(dy2) + h(dz2); }

  double xi() const { return xi_; }
  const ContractionConstants& constants() const { return c_; }

 private:
  double taper_integral(double r) const;  // int_{R1*}^{r} s / alpha^2(s) ds

  ContractionConstants c_;
  double xi_;
  // h band
  double ha_, hb_, hc_, hdelta_;
  // alpha band: quintic Hermite coefficients on [R1*, R1* + xi/2]
  double acoef_[6];
  double f_R1_;
  // g knots
  double gA_, gpA_, gB_, gpB_, gC_, gpC_;
};

double beta_eval(const Vec& x, const Vec& xp, int n, const ContractionConstants& c, double xi);

struct CouplingOptions {
  long N = 50000;
  double T = 20;
  double dt = 1e-3;
  int checkpoints = 40;
  double xi = 1e-3;
  std::uint64_t seed = 0;
  int threads = 0;
  int batches = 20;
  //! Fit window starts at fit_from * T.
  double fit_from = 0.5;
  //! beta = 0 everywhere (synchronous coupling).
  bool force_synchronous = false;
};

struct CouplingTrace {
  std::vector<double> times;
  std::vector<double> mean_f, se_f, mean_g, se_g, mean_omega, se_omega, mean_fg, se_fg;
  double rate = 0;     //!< -slope of ln E[f(R)+g(S)] over the fit window
  double rate_se = 0;  //!< batch standard error
  int fit_points = 0;
  double max_orthogonality_dev = 0;
  long fallback_count = 0;
  long reflecting_steps = 0;
  long N = 0;
  long excluded = 0;
  std::string warning;
};

//! Model with noise matrix [ (0; theta I_m) | sigma_tilde ], which has the same
//! covariance as model.sigma and is what the coupling drives both copies with
//! (sigma_tilde columns omitted when it is zero).
DriftModel coupling_noise_model(const DriftModel& model);

//! One coupled pair; streams (seed, index, 0) for (B', B'') and (seed, index, 1) for B.
struct CoupledPair {
  Vec x, xp;
  bool divergent = false;
  double max_orthogonality_dev = 0;
  long fallback_count = 0;
};
CoupledPair simulate_pair(const DriftModel& model, const CouplingFunctions& fn, const Vec& x0,
                          const Vec& x0p, double T, double dt, std::uint64_t seed,
                          std::uint64_t index, bool force_synchronous = false);

CouplingTrace simulate_coupling(const DriftModel& model, const ContractionConstants& c,
                                const Vec& x0, const Vec& x0p, const CouplingOptions& opts);

}  // namespace wcontract
