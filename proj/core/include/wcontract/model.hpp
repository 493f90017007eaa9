#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

#include "wcontract/expr.hpp"

namespace wcontract {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

//! Block structure x = (y, z) with elliptic noise of level theta on z.
struct StateDecomposition {
  int n = 0;
  int m = 0;
  double rho1 = 0, L1 = 0, L2 = 0, L3 = 0;
  double theta = 0;
  //! Symmetric square root of sigma sigma^T - theta^2 blockdiag(0, I_m).
  Mat sigma_tilde;
};

//! Symmetric positive definite metric ||x||_Q with contraction data.
struct MetricChange {
  Mat Q;
  Mat Q_half;
  Mat Q_inv_half;
  double rho2 = 0;
  double S_star = 0;

  double norm_Q() const;        //!< spectral norm |Q|
  double norm_Q_inv() const;    //!< |Q^{-1}|
  double norm_Q_inv_half() const;  //!< |Q^{-1/2}|
  //! Spectral norm of the trailing m x m block.
  double norm_Q22(int m) const;
};

//! Throws ModelError if Q is not symmetric or has min eigenvalue < 1e-12.
MetricChange make_metric(const Mat& Q, double rho2, double S_star);

//! Checks sigma sigma^T - theta^2 blockdiag(0, I_m) >= 0 and builds sigma_tilde.
StateDecomposition make_decomposition(const Mat& sigma, int n, int m, double rho1,
                                      double L1, double L2, double L3, double theta);

struct DriftModel {
  std::string kind;
  int dim = 0;
  //! sigma is dim x noise_dim and constant.
  Mat sigma;
  std::function<void(const double* x, double* out)> drift;
  //! Row-major dim x dim.
  std::function<void(const double* x, double* jac)> jacobian;
  std::function<double(const double* x)> eta;
  //! Optional fused 1D evaluator: b(x), b'(x), eta(x).
  std::function<void(double x, double& b, double& db, double& eta)> scalar;
  //! One-sided Lipschitz constant of the drift.
  double lipschitz = 0;
  //! Bakry-Emery rate when known in closed form.
  std::optional<double> lambda_star;
  std::optional<StateDecomposition> decomposition;
  std::optional<MetricChange> metric;

  int noise_dim() const { return static_cast<int>(sigma.cols()); }
  Vec b(const Vec& x) const;
  Mat grad_b(const Vec& x) const;
  double eta_at(const Vec& x) const;
};

//! Largest eigenvalue of (J + J^T)/2.
double max_sym_eigenvalue(const Mat& J);

//! Q-weighted curvature: largest eigenvalue of sym(Q^{1/2} grad_b Q^{-1/2}).
std::function<double(const double*)> weighted_eta(const DriftModel& model, const Mat& Q);

//! Model in the variables x~ = T x: drift T b(T^{-1} x~), noise T sigma.
DriftModel linear_change(const DriftModel& model, const Mat& T);

//---------------------------------------------------------------------------//
// Builtin models
//---------------------------------------------------------------------------//

//! dX = -U'(X) dt + sqrt(2) theta dB, eta = -U''.
DriftModel overdamped1d(const ScalarExpr& U, double theta);

//! Named 1D potentials with native evaluation: "U0" (x^2), "U1", "U2".
ScalarExpr builtin_potential(const std::string& name);
DriftModel overdamped_builtin(const std::string& name, double theta);

//! dX = -rate X dt + sqrt(2) theta dB in R^d; eta = -rate, lambda* = rate.
DriftModel ornstein_uhlenbeck(double rate, int d, double theta);

//! dq = p dt, dp = (-V'(q) - gamma p) dt + sqrt(2) theta dB, V separable.
DriftModel kinetic_langevin(const ScalarExpr& V, double gamma, double theta, int d);

//! dX = A X dt + sigma dB (used for linear-flow oracles).
DriftModel linear_model(const Mat& A, const Mat& sigma);

struct ColoredNoiseOptions {
  //! Change-of-variables weight; <= 0 selects the default.
  double eta_cv = 0;
  //! Window for numerical bounds on V'' when V'' is not constant.
  double scan_radius = 10;
};

//! State (q, w) in R^{n+m}: dq = (-V'(q) + A w) dt, dw = -w dt + sigma0 dB.
struct ColoredNoiseModel {
  DriftModel qw;        //!< original variables
  DriftModel yz;        //!< (Y, Z) = (q, w + eta_cv A^T q), decomposition and metric wired
  Mat T;                //!< yz = T qw
  double eta_cv = 0;
  double curvature_L = 0;     //!< sup(-V'')
  double hessian_lip = 0;     //!< sup|V''|
  bool constant_hessian = false;
};

ColoredNoiseModel colored_noise(const ScalarExpr& V, const Mat& A, const Mat& sigma0,
                                const ColoredNoiseOptions& opts = {});

//! Solves B^T Q + Q B = -I; requires B Hurwitz.
Mat lyapunov_solve(const Mat& B);

}  // namespace wcontract
