#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "wcontract/model.hpp"
#include "wcontract/rng.hpp"

namespace wcontract {

enum class TangentScheme {
  explicit_euler,      //!< V <- V + grad_b(x) V dt
  frozen_exponential,  //!< 1D only: V <- V exp(b'(x) dt)
};

enum class IntegralRule {
  trapezoid,   //!< I += (eta(x_k) + eta(x_{k+1})) dt / 2
  left_point,  //!< I += eta(x_k) dt
};

struct StepOptions {
  TangentScheme tangent = TangentScheme::explicit_euler;
  IntegralRule integral = IntegralRule::trapezoid;
};

//! |x| beyond this (or non-finite) flags the path as divergent.
inline constexpr double kDivergenceBound = 1e8;

struct PathState {
  double t = 0;
  Vec x;
  //! Tangent vector; empty when not tracked.
  Vec v;
  //! Tangent matrix; empty when not tracked.
  Mat phi;
  bool track_integral = false;
  //! Running integral of eta along the path.
  double integral = 0;
  bool divergent = false;

  static PathState start(const Vec& x0);
  static PathState with_tangent(const Vec& x0, const Vec& v0);
  static PathState with_matrix(const Vec& x0);
};

//! One Euler-Maruyama step with the given standard normals xi
//! (model.noise_dim() of them). The tangent uses the Jacobian at the
//! step's start point.
PathState em_step(const DriftModel& model, const PathState& s, double dt, const double* xi,
                  const StepOptions& opts = {});
PathState em_step(const DriftModel& model, const PathState& s, double dt, RngStream& rng,
                  const StepOptions& opts = {});

//! Number of steps used for horizon T at nominal step dt (dt is then T/n).
long step_count(double T, double dt);

//! Synchronous coupling: both paths see the same noise at every step.
std::pair<PathState, PathState> integrate_pair(const DriftModel& model, const Vec& x0,
                                               const Vec& y0, double T, double dt,
                                               RngStream& rng);

struct TangentResult {
  Vec x;
  Vec v;
  double integral = 0;
  bool divergent = false;
};

TangentResult integrate_tangent(const DriftModel& model, const Vec& x0, const Vec& v0, double T,
                                double dt, RngStream& rng, const StepOptions& opts = {});

//---------------------------------------------------------------------------//
// Allocation-free path kernels used by the Monte Carlo estimators
//---------------------------------------------------------------------------//

//! Per-checkpoint output of a 1D tangent path: ln|V_t| and int_0^t eta.
struct Checkpoints1D {
  std::vector<double> log_v;
  std::vector<double> integral;
  bool divergent = false;
};

//! Runs one 1D path from x0 with V_0 = 1 and records at the given
//! (ascending) step indices. Requires model.scalar.
void tangent_path_1d(const DriftModel& model, double x0, double dt,
                     const std::vector<long>& checkpoint_steps, RngStream& rng,
                     const StepOptions& opts, Checkpoints1D& out);

//! Multi-d tangent matrix path with explicit Euler; phi is stored as
//! exp(log_scale) * phi_k, row-major d x d per checkpoint.
struct CheckpointsND {
  std::vector<double> phi;
  std::vector<double> log_scale;
  std::vector<double> integral;
  bool divergent = false;
};

void tangent_path_nd(const DriftModel& model, const double* x0, double dt,
                     const std::vector<long>& checkpoint_steps, RngStream& rng,
                     const StepOptions& opts, CheckpointsND& out);

//! x_i <- x_i + b_i dt + sqrt(dt) * noise_i; shared by every integrator so
//! that identical inputs give identical bits.
inline void apply_increment(double* x, const double* b, const double* noise, int d, double dt,
                            double sqdt) {
  for (int i = 0; i < d; ++i) x[i] = x[i] + b[i] * dt + sqdt * noise[i];
}

//! noise = sigma xi for row-major sigma (d x k).
inline void noise_product(const double* sigma, int d, int k, const double* xi, double* noise) {
  for (int i = 0; i < d; ++i) {
    double acc = 0;
    for (int j = 0; j < k; ++j) acc += sigma[i * k + j] * xi[j];
    noise[i] = acc;
  }
}

bool diverged(const double* x, int d);

}  // namespace wcontract
