#include "wcontract/fk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wcontract/parallel.hpp"

namespace wcontract {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

//! Solves (mu I - A) y = r for the assembled tridiagonal A without pivoting.
//! For mu above the Perron root this is a nonsingular M-matrix, so the
//! elimination is stable and y > 0 whenever r > 0.
void shifted_solve(const FKDiscretization& op, double mu, std::vector<double>& r) {
  const int n = op.n;
  std::vector<double> c(n);
  c[0] = mu - op.diag[0];
  for (int i = 1; i < n; ++i) {
    double l = -op.lower[i] / c[i - 1];
    c[i] = (mu - op.diag[i]) + l * op.upper[i - 1];
    r[i] -= l * r[i - 1];
  }
  r[n - 1] /= c[n - 1];
  for (int i = n - 1; i-- > 0;) r[i] = (r[i] + op.upper[i] * r[i + 1]) / c[i];
}

double residual_inf(const FKDiscretization& op, const std::vector<double>& f, double lambda) {
  double worst = 0, fmax = 0;
  for (int i = 0; i < op.n; ++i) {
    double y = op.diag[i] * f[i];
    if (i > 0) y += op.lower[i] * f[i - 1];
    if (i + 1 < op.n) y += op.upper[i] * f[i + 1];
    worst = std::max(worst, std::fabs(y - lambda * f[i]));
    fmax = std::max(fmax, std::fabs(f[i]));
  }
  return fmax > 0 ? worst / fmax : worst;
}

EigenResult solve_sturm(const FKDiscretization& op, const EigenOptions& opts) {
  EigenResult res;
  res.method = EigenMethod::sturm;
  std::vector<double> d, e;
  op.symmetric_form(d, e);
  long it = 0;
  auto [lo, hi] = sturm_largest(d, e, opts.tol, &it);
  res.lo = lo;
  res.hi = hi;
  res.lambda = 0.5 * (lo + hi);
  res.iterations = it;

  // Inverse iteration on A itself, started from the positive vector.
  double scale = 0;
  for (std::size_t i = 0; i < d.size(); ++i) scale = std::max(scale, std::fabs(d[i]));
  double mu = hi + std::max({1e-8 * (1 + std::fabs(hi)), 10 * (hi - lo), 16 * kEps * scale});
  std::vector<double> f(d.size(), 1.0);
  for (int k = 0; k < 3; ++k) {
    shifted_solve(op, mu, f);
    double fmax = 0;
    for (double v : f) fmax = std::max(fmax, std::fabs(v));
    for (double& v : f) v /= fmax;
  }
  res.eigenvector = std::move(f);
  res.residual = residual_inf(op, res.eigenvector, res.lambda);
  res.converged = true;
  return res;
}

EigenResult solve_power(const FKDiscretization& op, const EigenOptions& opts) {
  EigenResult res;
  res.method = EigenMethod::power;
  const int n = op.n;
  for (int i = 0; i + 1 < n; ++i) {
    if (op.upper[i] < 0 || op.lower[i + 1] < 0) {
      res.diagnostic = "negative off-diagonal entry: the shifted matrix is not nonnegative; refine dx";
      return res;
    }
  }
  double shift = -*std::min_element(op.diag.begin(), op.diag.end());
  std::vector<double> x(n, 1.0), y(n);
  double cw_lo = 0, cw_hi = 0;
  for (long it = 1; it <= opts.max_iterations; ++it) {
    double ymax = 0;
    for (int i = 0; i < n; ++i) {
      double v = (op.diag[i] + shift) * x[i];
      if (i > 0) v += op.lower[i] * x[i - 1];
      if (i + 1 < n) v += op.upper[i] * x[i + 1];
      y[i] = v;
      ymax = std::max(ymax, v);
    }
    cw_lo = std::numeric_limits<double>::infinity();
    cw_hi = -cw_lo;
    for (int i = 0; i < n; ++i) {
      if (y[i] < 0 || !std::isfinite(y[i])) {
        res.diagnostic = "iterate lost positivity (possible complex pair); aborting";
        res.iterations = it;
        return res;
      }
      if (x[i] > 1e-280) {
        double r = y[i] / x[i];
        cw_lo = std::min(cw_lo, r);
        cw_hi = std::max(cw_hi, r);
      }
    }
    for (int i = 0; i < n; ++i) x[i] = y[i] / ymax;
    res.iterations = it;
    double mid = 0.5 * (cw_lo + cw_hi);
    // relative to the shifted spectrum, whose scale sets the rounding floor
    if (cw_hi - cw_lo <= opts.tol * std::max(1.0, std::fabs(mid))) {
      res.converged = true;
      break;
    }
  }
  res.lo = cw_lo - shift;
  res.hi = cw_hi - shift;
  res.lambda = 0.5 * (cw_lo + cw_hi) - shift;
  res.eigenvector = x;
  res.residual = residual_inf(op, x, res.lambda);
  if (!res.converged) res.diagnostic = "power iteration did not converge";
  return res;
}

}  // namespace

//---------------------------------------------------------------------------//

bool FKDiscretization::symmetrizable() const {
  for (int i = 0; i + 1 < n; ++i)
    if (!(upper[i] * lower[i + 1] > 0)) return false;
  return true;
}

std::vector<double> FKDiscretization::log_similarity() const {
  std::vector<double> logD(n, 0.0);
  for (int i = 0; i + 1 < n; ++i)
    logD[i + 1] = logD[i] + 0.5 * (std::log(lower[i + 1]) - std::log(upper[i]));
  return logD;
}

void FKDiscretization::symmetric_form(std::vector<double>& d, std::vector<double>& e) const {
  d = diag;
  e.resize(n - 1);
  for (int i = 0; i + 1 < n; ++i) e[i] = std::sqrt(upper[i] * lower[i + 1]);
}

FKDiscretization build_operator(const DriftModel& model, double p, double x_min, double x_max,
                                double dx, Boundary boundary) {
  if (model.dim != 1 || !model.scalar) throw FKError("build_operator needs a 1D model");
  if (!(dx > 0) || !(x_max > x_min)) throw FKError("invalid domain or step");
  long n = std::lround((x_max - x_min) / dx) + 1;
  if (n < 10) throw FKError("domain too small relative to dx (fewer than 10 nodes)");
  FKDiscretization op;
  op.x_min = x_min;
  op.x_max = x_max;
  op.dx = dx;
  op.n = static_cast<int>(n);
  op.p = p;
  op.boundary = boundary;
  op.sigma2 = (model.sigma * model.sigma.transpose())(0, 0);
  op.x.resize(n);
  op.b.resize(n);
  op.p_eta.resize(n);
  op.sub.resize(n);
  op.diag.resize(n);
  op.super.resize(n);
  const double a = op.sigma2 / (dx * dx);
  for (long i = 0; i < n; ++i) {
    double x = x_min + i * dx;
    double b, db, eta;
    model.scalar(x, b, db, eta);
    op.x[i] = x;
    op.b[i] = b;
    op.p_eta[i] = p * eta;
    op.diag[i] = -a + p * eta;
    op.super[i] = 0.5 * a + b / (2 * dx);
    op.sub[i] = 0.5 * a - b / (2 * dx);
  }
  op.lower.assign(n, 0.0);
  op.upper.assign(n, 0.0);
  for (long i = 0; i + 1 < n; ++i) {
    op.upper[i] = op.super[i];
    op.lower[i + 1] = op.sub[i + 1];
  }
  if (boundary == Boundary::reflecting) {
    // ghost f_{-1} = f_1 and f_n = f_{n-2}
    op.upper[0] += op.sub[0];
    op.lower[n - 1] += op.super[n - 1];
  }
  return op;
}

long sturm_count(const std::vector<double>& d, const std::vector<double>& e, double lambda) {
  const std::size_t n = d.size();
  double emax2 = 0;
  for (double v : e) emax2 = std::max(emax2, v * v);
  const double pivmin = std::numeric_limits<double>::min() * std::max(1.0, emax2);
  long count = 0;
  double q = d[0] - lambda;
  if (std::fabs(q) < pivmin) q = -pivmin;
  if (q < 0) ++count;
  for (std::size_t i = 1; i < n; ++i) {
    q = (d[i] - lambda) - e[i - 1] * e[i - 1] / q;
    if (std::fabs(q) < pivmin) q = -pivmin;
    if (q < 0) ++count;
  }
  return count;
}

std::pair<double, double> sturm_largest(const std::vector<double>& d, const std::vector<double>& e,
                                        double tol, long* iterations) {
  const std::size_t n = d.size();
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, norm = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = (i > 0 ? std::fabs(e[i - 1]) : 0) + (i + 1 < n ? std::fabs(e[i]) : 0);
    lo = std::min(lo, d[i] - r);
    hi = std::max(hi, d[i] + r);
    norm = std::max(norm, std::fabs(d[i]) + r);
  }
  hi += kEps * norm;
  std::vector<double> e2(e.size());
  const double floor_tol = 4 * kEps * norm;
  long it = 0;
  // Largest eigenvalue: the unique point where the count goes from n-1 to n.
  // Inline count with precomputed squares.
  double emax2 = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    e2[i] = e[i] * e[i];
    emax2 = std::max(emax2, e2[i]);
  }
  const double pivmin = std::numeric_limits<double>::min() * std::max(1.0, emax2);
  auto all_below = [&](double lambda) {
    double q = d[0] - lambda;
    if (std::fabs(q) < pivmin) q = -pivmin;
    long c = q < 0;
    for (std::size_t i = 1; i < n; ++i) {
      q = (d[i] - lambda) - e2[i - 1] / q;
      if (std::fabs(q) < pivmin) q = -pivmin;
      c += q < 0;
    }
    return c == static_cast<long>(n);
  };
  while (hi - lo > std::max(tol, floor_tol) && it < 400) {
    double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (all_below(mid))
      hi = mid;
    else
      lo = mid;
    ++it;
  }
  if (iterations) *iterations = it;
  return {lo, hi};
}

EigenResult leading_eigenvalue(const FKDiscretization& op, const EigenOptions& opts) {
  if (!(opts.tol > 0)) throw FKError("tol must be positive");
  EigenMethod m = opts.method;
  if (m == EigenMethod::automatic) m = op.symmetrizable() ? EigenMethod::sturm : EigenMethod::power;
  if (m == EigenMethod::sturm) {
    if (!op.symmetrizable()) throw FKError("operator is not symmetrizable (off-diagonal products must be positive)");
    return solve_sturm(op, opts);
  }
  return solve_power(op, opts);
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v;
  if (n == 1) return {lo};
  for (int i = 0; i < n; ++i) v.push_back(i == n - 1 ? hi : lo + (hi - lo) * i / (n - 1));
  return v;
}

SweepResult sweep(const std::function<DriftModel(double theta)>& family,
                  const std::vector<double>& ps, const std::vector<double>& theta2s,
                  const SweepOptions& opts) {
  if (ps.empty() || theta2s.empty()) throw FKError("sweep grids must be non-empty");
  SweepResult res;
  res.ps = ps;
  res.theta2s = theta2s;
  const std::size_t cells = ps.size() * theta2s.size();
  res.values.assign(cells, std::numeric_limits<double>::quiet_NaN());
  res.converged.assign(cells, 0);
  parallel_for(cells, opts.threads, [&](std::size_t c) {
    std::size_t ip = c / theta2s.size(), it = c % theta2s.size();
    try {
      DriftModel m = family(std::sqrt(theta2s[it]));
      FKDiscretization op = build_operator(m, ps[ip], opts.x_min, opts.x_max, opts.dx, opts.boundary);
      EigenResult r = leading_eigenvalue(op, opts.eigen);
      res.values[c] = r.lambda / ps[ip];
      res.converged[c] = r.converged ? 1 : 0;
    } catch (const std::exception&) {
      res.converged[c] = 0;
    }
  });
  return res;
}

}  // namespace wcontract
