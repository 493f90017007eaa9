#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wcontract/model.hpp"
#include "wcontract/sde.hpp"

namespace wcontract {

struct McEstimate {
  double value = 0;
  double stderr_ = 0;
  long n = 0;
  long excluded = 0;
  //! Samples clamped at the overflow ceiling.
  long saturated = 0;
};

class McError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SupSearchSpec {
  std::vector<Vec> points;
  //! Candidate unit directions; empty means coordinate axes only.
  std::vector<Vec> directions;
  //! Extra uniform random directions drawn from the seed (multi-d only).
  int random_directions = 32;
  //! Fixed-point refinement steps on the sample ensemble (multi-d only).
  int refine_steps = 10;

  //! Points lo, lo+step, ..., hi (inclusive up to rounding).
  static SupSearchSpec grid1d(double lo, double hi, double step);
  static SupSearchSpec single(const Vec& x);
  void validate(int dim) const;
};

struct McOptions {
  long N = 1000;
  double dt = 1e-3;
  std::uint64_t seed = 0;
  int threads = 0;
  StepOptions step{};
  //! 1D only: use exp(p int eta) with eta = b' in place of |V_t|^p.
  bool kappa_from_integral = false;
};

struct KappaResult {
  double t = 0;
  double p = 0;
  McEstimate estimate;
  Vec argmax_x;
  Vec argmax_v;
  //! The maximum sits on the first or last grid point (1D) or on the hull.
  bool grid_edge = false;
  std::vector<double> per_point;
};

KappaResult estimate_kappa_p(const DriftModel& model, double p, double t, const SupSearchSpec& spec,
                             const McOptions& opts);

//! All (p, t) combinations from one path ensemble (common random numbers).
//! Result is indexed [ip * times.size() + it].
std::vector<KappaResult> estimate_kappa_grid(const DriftModel& model, const std::vector<double>& ps,
                                             const std::vector<double>& times,
                                             const SupSearchSpec& spec, const McOptions& opts);

//! Mean of exp(p int_0^t eta(X_s) ds) from x; values above 1e300 are
//! clamped and counted.
McEstimate estimate_Gp(const DriftModel& model, double p, const Vec& x, double t,
                       const McOptions& opts);

inline constexpr double kExpCeiling = 1e300;

struct LyapunovResult {
  McEstimate rate;
  std::vector<double> times;
  std::vector<double> kappa;
  std::vector<double> local_rate;  //!< (1/t) ln kappa(t)
  bool checkpoints_agree = true;
  std::string warning;
};

LyapunovResult estimate_lyapunov(const DriftModel& model, double p, double T,
                                 const SupSearchSpec& spec, const McOptions& opts,
                                 int checkpoints = 20);

struct SubmultiplicativityReport {
  double kappa_t = 0, kappa_s = 0, kappa_ts = 0;
  double se_t = 0, se_s = 0, se_ts = 0;
  double product = 0;
  double combined_se = 0;
  bool pass = false;
};

SubmultiplicativityReport check_submultiplicativity(const DriftModel& model, double p, double t,
                                                    double s, const SupSearchSpec& spec,
                                                    const McOptions& opts);

struct MonotonePReport {
  std::vector<double> ps;
  std::vector<double> kappa;
  std::vector<double> se;
  bool pass = false;
};

MonotonePReport check_monotone_p(const DriftModel& model, double t, const std::vector<double>& ps,
                                 const SupSearchSpec& spec, const McOptions& opts);

struct BakryEmeryReport {
  double lambda_star = 0;
  bool lambda_from_grid = false;
  double kappa = 0, se = 0, bound = 0;
  bool bound_pass = false;
  // short-time check
  std::vector<double> short_times;
  std::vector<double> short_residuals;
  double fitted_C = 0;
  double loglog_slope = 0;
  bool short_time_pass = false;
};

struct BakryEmeryOptions {
  double short_dt = 1e-4;
  std::vector<double> short_times{0.00625, 0.0125, 0.025, 0.05};
  double min_slope = 1.5;
  bool short_time = true;
};

BakryEmeryReport check_bakry_emery(const DriftModel& model, double p, double t,
                                   const SupSearchSpec& spec, const McOptions& opts,
                                   const BakryEmeryOptions& be = {});

//! -max eta over the spec points (used when lambda* has no closed form).
double grid_lambda_star(const DriftModel& model, const SupSearchSpec& spec);

//! Least-squares slope and its standard error.
struct LinearFit {
  double slope = 0, intercept = 0, slope_se = 0;
};
LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace wcontract
