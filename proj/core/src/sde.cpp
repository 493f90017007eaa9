#include "wcontract/sde.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace wcontract {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kRescaleHi = 1e100;
constexpr double kRescaleLo = 1e-100;

}  // namespace

bool diverged(const double* x, int d) {
  for (int i = 0; i < d; ++i)
    if (!(std::fabs(x[i]) <= kDivergenceBound)) return true;
  return false;
}

PathState PathState::start(const Vec& x0) {
  PathState s;
  s.x = x0;
  return s;
}

PathState PathState::with_tangent(const Vec& x0, const Vec& v0) {
  PathState s = start(x0);
  s.v = v0;
  return s;
}

PathState PathState::with_matrix(const Vec& x0) {
  PathState s = start(x0);
  s.phi = Mat::Identity(x0.size(), x0.size());
  return s;
}

long step_count(double T, double dt) {
  if (!(dt > 0)) throw std::invalid_argument("dt must be positive");
  if (!(T > 0)) throw std::invalid_argument("T must be positive");
  long n = std::lround(T / dt);
  return n < 1 ? 1 : n;
}

PathState em_step(const DriftModel& model, const PathState& s, double dt, const double* xi,
                  const StepOptions& opts) {
  if (!(dt > 0)) throw std::invalid_argument("dt must be positive");
  const int d = model.dim;
  const int k = model.noise_dim();
  PathState out = s;
  out.t = s.t + dt;
  if (s.divergent) return out;

  Vec b(d), noise(d);
  model.drift(s.x.data(), b.data());
  RowMat sig = model.sigma;
  noise_product(sig.data(), d, k, xi, noise.data());
  apply_increment(out.x.data(), b.data(), noise.data(), d, dt, std::sqrt(dt));

  if (s.v.size() > 0 || s.phi.size() > 0) {
    RowMat J(d, d);
    model.jacobian(s.x.data(), J.data());
    if (s.v.size() > 0) {
      if (opts.tangent == TangentScheme::frozen_exponential) {
        if (d != 1) throw std::invalid_argument("frozen exponential tangent is 1D only");
        out.v[0] = s.v[0] * std::exp(J(0, 0) * dt);
      } else {
        for (int i = 0; i < d; ++i) {
          double acc = 0;
          for (int j = 0; j < d; ++j) acc += J(i, j) * s.v[j];
          out.v[i] = s.v[i] + dt * acc;
        }
      }
    }
    if (s.phi.size() > 0) out.phi = s.phi + dt * (J * s.phi);
  }
  if (s.track_integral) {
    double e0 = model.eta(s.x.data());
    if (opts.integral == IntegralRule::left_point)
      out.integral = s.integral + e0 * dt;
    else
      out.integral = s.integral + 0.5 * (e0 + model.eta(out.x.data())) * dt;
  }
  out.divergent = diverged(out.x.data(), d);
  return out;
}

PathState em_step(const DriftModel& model, const PathState& s, double dt, RngStream& rng,
                  const StepOptions& opts) {
  std::vector<double> xi(model.noise_dim());
  rng.normals(xi.data(), model.noise_dim());
  return em_step(model, s, dt, xi.data(), opts);
}

std::pair<PathState, PathState> integrate_pair(const DriftModel& model, const Vec& x0,
                                               const Vec& y0, double T, double dt,
                                               RngStream& rng) {
  const int d = model.dim;
  const int k = model.noise_dim();
  if (x0.size() != d || y0.size() != d) throw std::invalid_argument("initial state has the wrong dimension");
  const long n = step_count(T, dt);
  const double h = T / n;
  const double sqh = std::sqrt(h);
  RowMat sig = model.sigma;
  PathState a = PathState::start(x0), b = PathState::start(y0);
  std::vector<double> xi(k), noise(d), ba(d), bb(d);
  for (long step = 0; step < n; ++step) {
    rng.normals(xi.data(), k);
    noise_product(sig.data(), d, k, xi.data(), noise.data());
    if (!a.divergent) {
      model.drift(a.x.data(), ba.data());
      apply_increment(a.x.data(), ba.data(), noise.data(), d, h, sqh);
      a.divergent = diverged(a.x.data(), d);
    }
    if (!b.divergent) {
      model.drift(b.x.data(), bb.data());
      apply_increment(b.x.data(), bb.data(), noise.data(), d, h, sqh);
      b.divergent = diverged(b.x.data(), d);
    }
  }
  a.t = b.t = n * h;
  return {a, b};
}

TangentResult integrate_tangent(const DriftModel& model, const Vec& x0, const Vec& v0, double T,
                                double dt, RngStream& rng, const StepOptions& opts) {
  if (std::fabs(v0.norm() - 1) > 1e-12) throw std::invalid_argument("v0 must be a unit vector");
  const long n = step_count(T, dt);
  const double h = T / n;
  PathState s = PathState::with_tangent(x0, v0);
  s.track_integral = true;
  std::vector<double> xi(model.noise_dim());
  for (long step = 0; step < n && !s.divergent; ++step) {
    rng.normals(xi.data(), model.noise_dim());
    s = em_step(model, s, h, xi.data(), opts);
  }
  return {s.x, s.v, s.integral, s.divergent};
}

void tangent_path_1d(const DriftModel& model, double x0, double dt,
                     const std::vector<long>& checkpoint_steps, RngStream& rng,
                     const StepOptions& opts, Checkpoints1D& out) {
  if (model.dim != 1 || !model.scalar) throw std::invalid_argument("tangent_path_1d needs a 1D model with a scalar evaluator");
  const std::size_t K = checkpoint_steps.size();
  out.log_v.assign(K, std::numeric_limits<double>::quiet_NaN());
  out.integral.assign(K, std::numeric_limits<double>::quiet_NaN());
  out.divergent = false;
  if (K == 0) return;

  const int k = model.noise_dim();
  const double sqdt = std::sqrt(dt);
  const bool expo = opts.tangent == TangentScheme::frozen_exponential;
  const bool trap = opts.integral == IntegralRule::trapezoid;
  double sig1 = model.sigma(0, 0);
  std::vector<double> sig(model.sigma.data(), model.sigma.data() + k);
  double xi_buf[8];
  std::vector<double> xi_heap;
  double* xi = xi_buf;
  if (k > 8) {
    xi_heap.resize(k);
    xi = xi_heap.data();
  }

  double x = x0, v = 1, log_scale = 0, I = 0;
  double b, db, eta;
  model.scalar(x, b, db, eta);
  std::size_t c = 0;
  while (c < K && checkpoint_steps[c] == 0) {
    out.log_v[c] = 0;
    out.integral[c] = 0;
    ++c;
  }
  const long last = checkpoint_steps.back();
  for (long step = 1; step <= last; ++step) {
    double noise;
    if (k == 1) {
      noise = 0.0 + sig1 * rng.normal();
    } else {
      rng.normals(xi, k);
      noise_product(sig.data(), 1, k, xi, &noise);
    }
    double xn = x + b * dt + sqdt * noise;
    if (expo)
      v = v * std::exp(db * dt);
    else
      v = v + dt * (db * v);
    double bn, dbn, etan;
    model.scalar(xn, bn, dbn, etan);
    I = trap ? I + 0.5 * (eta + etan) * dt : I + eta * dt;
    x = xn;
    b = bn;
    db = dbn;
    eta = etan;
    if (!(std::fabs(x) <= kDivergenceBound)) {
      out.divergent = true;
      return;
    }
    double av = std::fabs(v);
    if ((av > kRescaleHi || av < kRescaleLo) && av > 0) {
      log_scale += std::log(av);
      v = v > 0 ? 1.0 : -1.0;
    }
    while (c < K && checkpoint_steps[c] == step) {
      out.log_v[c] = log_scale + std::log(std::fabs(v));
      out.integral[c] = I;
      ++c;
    }
  }
}

void tangent_path_nd(const DriftModel& model, const double* x0, double dt,
                     const std::vector<long>& checkpoint_steps, RngStream& rng,
                     const StepOptions& opts, CheckpointsND& out) {
  const int d = model.dim;
  const int k = model.noise_dim();
  const std::size_t K = checkpoint_steps.size();
  out.phi.assign(K * d * d, std::numeric_limits<double>::quiet_NaN());
  out.log_scale.assign(K, 0);
  out.integral.assign(K, std::numeric_limits<double>::quiet_NaN());
  out.divergent = false;
  if (K == 0) return;

  RowMat sig = model.sigma;
  const double sqdt = std::sqrt(dt);
  const bool trap = opts.integral == IntegralRule::trapezoid;
  std::vector<double> x(x0, x0 + d), b(d), noise(d), xi(k), J(d * d), phi(d * d, 0.0),
      tmp(d * d);
  for (int i = 0; i < d; ++i) phi[i * d + i] = 1;
  double log_scale = 0, I = 0;
  double eta = model.eta(x.data());

  auto record = [&](std::size_t c) {
    std::copy(phi.begin(), phi.end(), out.phi.begin() + c * d * d);
    out.log_scale[c] = log_scale;
    out.integral[c] = I;
  };
  std::size_t c = 0;
  while (c < K && checkpoint_steps[c] == 0) record(c++);
  const long last = checkpoint_steps.back();
  for (long step = 1; step <= last; ++step) {
    rng.normals(xi.data(), k);
    noise_product(sig.data(), d, k, xi.data(), noise.data());
    model.drift(x.data(), b.data());
    model.jacobian(x.data(), J.data());
    apply_increment(x.data(), b.data(), noise.data(), d, dt, sqdt);
    // phi <- phi + dt J phi
    double amax = 0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        double acc = 0;
        for (int l = 0; l < d; ++l) acc += J[i * d + l] * phi[l * d + j];
        tmp[i * d + j] = phi[i * d + j] + dt * acc;
        amax = std::max(amax, std::fabs(tmp[i * d + j]));
      }
    phi.swap(tmp);
    double etan = model.eta(x.data());
    I = trap ? I + 0.5 * (eta + etan) * dt : I + eta * dt;
    eta = etan;
    if (diverged(x.data(), d)) {
      out.divergent = true;
      return;
    }
    if ((amax > kRescaleHi || amax < kRescaleLo) && amax > 0) {
      log_scale += std::log(amax);
      for (double& p : phi) p /= amax;
    }
    while (c < K && checkpoint_steps[c] == step) record(c++);
  }
}

}  // namespace wcontract
