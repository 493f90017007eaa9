#pragma once

#include <functional>
#include <stdexcept>
#include <utility>
#include <string>
#include <vector>

#include "wcontract/model.hpp"

namespace wcontract {

enum class Boundary {
  reflecting,  //!< mirrored ghost node, zero flux
  dirichlet,   //!< f = 0 outside the domain
};

//! Tridiagonal finite-difference form of f -> b f' + (sigma^2/2) f'' + p eta f.
struct FKDiscretization {
  double x_min = 0, x_max = 0, dx = 0;
  int n = 0;
  double sigma2 = 0;  //!< sigma^2; the diffusion coefficient is sigma2 / 2
  double p = 1;
  Boundary boundary = Boundary::reflecting;
  std::vector<double> x, b, p_eta;
  //! Centered stencil before boundary handling.
  std::vector<double> sub, diag, super;
  //! Assembled matrix: lower[i] = A(i, i-1) for i >= 1, upper[i] = A(i, i+1) for i < n-1.
  std::vector<double> lower, upper;

  //! True when every product upper[i] * lower[i+1] is positive.
  bool symmetrizable() const;
  //! log D_i of the diagonal similarity making D^{-1} A D symmetric (D_0 = 1).
  std::vector<double> log_similarity() const;
  //! Symmetric tridiagonal D^{-1} A D: diagonal and off-diagonal (size n-1).
  void symmetric_form(std::vector<double>& d, std::vector<double>& e) const;
};

class FKError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

//! Requires a 1D model with a scalar evaluator and at least 10 nodes.
FKDiscretization build_operator(const DriftModel& model, double p, double x_min, double x_max,
                                double dx, Boundary boundary = Boundary::reflecting);

enum class EigenMethod { automatic, sturm, power };

struct EigenOptions {
  double tol = 1e-10;
  EigenMethod method = EigenMethod::automatic;
  long max_iterations = 2000000;
};

struct EigenResult {
  double lambda = 0;
  //! Positive eigenvector of A, scaled to max 1.
  std::vector<double> eigenvector;
  long iterations = 0;
  bool converged = false;
  //! ||A f - lambda f||_inf / ||f||_inf.
  double residual = 0;
  EigenMethod method = EigenMethod::sturm;
  //! Final bracket [lo, hi] containing lambda.
  double lo = 0, hi = 0;
  std::string diagnostic;
};

EigenResult leading_eigenvalue(const FKDiscretization& op, const EigenOptions& opts = {});

//! Largest eigenvalue of a symmetric tridiagonal matrix by Sturm bisection.
//! Returns the bracket [lo, hi] of width <= tol (or rounding level).
std::pair<double, double> sturm_largest(const std::vector<double>& d, const std::vector<double>& e,
                                        double tol, long* iterations = nullptr);

//! Number of eigenvalues strictly below lambda.
long sturm_count(const std::vector<double>& d, const std::vector<double>& e, double lambda);

struct SweepResult {
  std::vector<double> ps;
  std::vector<double> theta2s;
  //! J(p eta)/p, row-major [ip][it].
  std::vector<double> values;
  std::vector<char> converged;
  double at(std::size_t ip, std::size_t it) const { return values[ip * theta2s.size() + it]; }
};

struct SweepOptions {
  double x_min = -5, x_max = 5, dx = 1e-3;
  Boundary boundary = Boundary::reflecting;
  EigenOptions eigen{};
  int threads = 0;
};

//! family(theta) builds the 1D model at diffusion level theta (theta^2 = theta2).
SweepResult sweep(const std::function<DriftModel(double theta)>& family,
                  const std::vector<double>& ps, const std::vector<double>& theta2s,
                  const SweepOptions& opts = {});

//! n evenly spaced values from lo to hi inclusive.
std::vector<double> linspace(double lo, double hi, int n);

}  // namespace wcontract
