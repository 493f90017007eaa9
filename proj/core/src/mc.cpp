#include "wcontract/mc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "wcontract/parallel.hpp"

namespace wcontract {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

//! Substream used for the random search directions.
constexpr std::uint32_t kDirectionSubstream = 0x0D1Eu;

struct Moment {
  double kappa = kNaN;
  double se = 0;
  long used = 0;
  long excluded = 0;
};

//! (mean exp(p l_i))^{1/p} with a delta-method standard error; NaN samples
//! are excluded.
Moment power_mean(const double* l, long n, long stride, double p) {
  Moment r;
  double m = -std::numeric_limits<double>::infinity();
  for (long i = 0; i < n; ++i) {
    double v = l[i * stride];
    if (std::isnan(v)) {
      ++r.excluded;
      continue;
    }
    m = std::max(m, p * v);
    ++r.used;
  }
  if (r.used == 0) return r;
  if (m == -std::numeric_limits<double>::infinity()) {
    r.kappa = 0;
    return r;
  }
  double s = 0;
  for (long i = 0; i < n; ++i) {
    double v = l[i * stride];
    if (!std::isnan(v)) s += std::exp(p * v - m);
  }
  double mean = s / r.used;
  double ss = 0;
  for (long i = 0; i < n; ++i) {
    double v = l[i * stride];
    if (!std::isnan(v)) {
      double e = std::exp(p * v - m) - mean;
      ss += e * e;
    }
  }
  double var = r.used > 1 ? ss / (r.used - 1) : 0;
  r.kappa = std::exp((m + std::log(mean)) / p);
  r.se = r.kappa * std::sqrt(var / r.used) / mean / p;
  return r;
}

class Ensemble {
 public:
  Ensemble(const DriftModel& model, const SupSearchSpec& spec, std::vector<long> steps,
           const McOptions& opts)
      : model_(model), spec_(spec), opts_(opts), steps_(std::move(steps)) {
    d_ = model.dim;
    G_ = spec.points.size();
    K_ = steps_.size();
    N_ = opts.N;
    one_d_ = d_ == 1 && static_cast<bool>(model.scalar);
    if (opts.kappa_from_integral && d_ != 1)
      throw McError("kappa_from_integral requires a 1D model");
    const std::size_t paths = G_ * static_cast<std::size_t>(N_);
    if (one_d_) {
      logs_.assign(paths * K_, kNaN);
    } else {
      phi_.assign(paths * K_ * d_ * d_, kNaN);
      scale_.assign(paths * K_, kNaN);
    }
    parallel_for(paths, opts.threads, [&](std::size_t idx) {
      std::size_t g = idx / N_;
      std::uint64_t i = idx % N_;
      RngStream rng(opts_.seed, i);
      if (one_d_) {
        Checkpoints1D cp;
        tangent_path_1d(model_, spec_.points[g][0], opts_.dt, steps_, rng, opts_.step, cp);
        if (cp.divergent) return;
        const auto& src = opts_.kappa_from_integral ? cp.integral : cp.log_v;
        std::copy(src.begin(), src.end(), logs_.begin() + idx * K_);
      } else {
        CheckpointsND cp;
        tangent_path_nd(model_, spec_.points[g].data(), opts_.dt, steps_, rng, opts_.step, cp);
        if (cp.divergent) return;
        std::copy(cp.phi.begin(), cp.phi.end(), phi_.begin() + idx * K_ * d_ * d_);
        std::copy(cp.log_scale.begin(), cp.log_scale.end(), scale_.begin() + idx * K_);
      }
    });
    if (!one_d_) build_directions();
  }

  KappaResult kappa(double p, std::size_t c, long i0, long i1) const {
    KappaResult best;
    best.p = p;
    best.per_point.assign(G_, kNaN);
    double best_val = -1;
    std::size_t best_g = 0;
    for (std::size_t g = 0; g < G_; ++g) {
      Moment mom;
      Vec v;
      if (one_d_) {
        const double* base = logs_.data() + (g * N_ + i0) * K_ + c;
        mom = power_mean(base, i1 - i0, static_cast<long>(K_), p);
        v = Vec::Ones(1);
      } else {
        mom = best_direction(g, c, p, i0, i1, v);
      }
      if (mom.used == 0) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "all paths divergent at grid point %zu", g);
        throw McError(buf);
      }
      best.per_point[g] = mom.kappa;
      if (mom.kappa > best_val) {
        best_val = mom.kappa;
        best_g = g;
        best.estimate.value = mom.kappa;
        best.estimate.stderr_ = mom.se;
        best.estimate.n = mom.used + mom.excluded;
        best.estimate.excluded = mom.excluded;
        best.argmax_v = v;
      }
    }
    best.argmax_x = spec_.points[best_g];
    best.grid_edge = on_edge(best_g);
    return best;
  }

  long N() const { return N_; }

 private:
  bool on_edge(std::size_t g) const {
    if (G_ <= 1) return false;
    for (int j = 0; j < d_; ++j) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (const auto& x : spec_.points) {
        lo = std::min(lo, x[j]);
        hi = std::max(hi, x[j]);
      }
      if (lo < hi && (spec_.points[g][j] == lo || spec_.points[g][j] == hi)) return true;
    }
    return false;
  }

  void build_directions() {
    for (int j = 0; j < d_; ++j) dirs_.push_back(Vec::Unit(d_, j));
    for (const auto& v : spec_.directions) dirs_.push_back(v.normalized());
    RngStream rng(opts_.seed, 0, kDirectionSubstream);
    for (int k = 0; k < spec_.random_directions; ++k) {
      Vec v(d_);
      for (int j = 0; j < d_; ++j) v[j] = rng.normal();
      dirs_.push_back(v.normalized());
    }
  }

  //! ln |Phi_i v| + log scale for each sample in [i0, i1).
  void log_norms(std::size_t g, std::size_t c, long i0, long i1, const Vec& v,
                 std::vector<double>& out) const {
    out.resize(i1 - i0);
    for (long i = i0; i < i1; ++i) {
      std::size_t pi = (g * N_ + i) * K_ + c;
      double s = scale_[pi];
      if (std::isnan(s)) {
        out[i - i0] = kNaN;
        continue;
      }
      const double* P = phi_.data() + pi * d_ * d_;
      double nrm2 = 0;
      for (int r = 0; r < d_; ++r) {
        double acc = 0;
        for (int q = 0; q < d_; ++q) acc += P[r * d_ + q] * v[q];
        nrm2 += acc * acc;
      }
      out[i - i0] = nrm2 > 0 ? 0.5 * std::log(nrm2) + s : -std::numeric_limits<double>::infinity();
    }
  }

  Moment best_direction(std::size_t g, std::size_t c, double p, long i0, long i1, Vec& vbest) const {
    std::vector<double> l;
    Moment best;
    best.kappa = -1;
    for (const auto& v : dirs_) {
      log_norms(g, c, i0, i1, v, l);
      Moment m = power_mean(l.data(), i1 - i0, 1, p);
      if (m.used > 0 && m.kappa > best.kappa) {
        best = m;
        vbest = v;
      }
    }
    if (best.used == 0) return best;
    // Stationarity of E|Phi v|^p on the sphere: v ~ E[|Phi v|^{p-2} Phi^T Phi v].
    Vec v = vbest;
    for (int it = 0; it < spec_.refine_steps; ++it) {
      log_norms(g, c, i0, i1, v, l);
      double m = -std::numeric_limits<double>::infinity();
      for (long i = i0; i < i1; ++i) {
        double li = l[i - i0];
        if (std::isnan(li)) continue;
        double s = scale_[(g * N_ + i) * K_ + c];
        m = std::max(m, (p - 2) * li + 2 * s);
      }
      if (!std::isfinite(m)) break;
      Vec acc = Vec::Zero(d_);
      for (long i = i0; i < i1; ++i) {
        double li = l[i - i0];
        if (std::isnan(li) || !std::isfinite(li)) continue;
        std::size_t pi = (g * N_ + i) * K_ + c;
        double w = std::exp((p - 2) * li + 2 * scale_[pi] - m);
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> P(
            phi_.data() + pi * d_ * d_, d_, d_);
        acc += w * (P.transpose() * (P * v));
      }
      double nrm = acc.norm();
      if (!(nrm > 0)) break;
      v = acc / nrm;
      log_norms(g, c, i0, i1, v, l);
      Moment mm = power_mean(l.data(), i1 - i0, 1, p);
      if (mm.used > 0 && mm.kappa > best.kappa) {
        best = mm;
        vbest = v;
      }
    }
    return best;
  }

  const DriftModel& model_;
  const SupSearchSpec& spec_;
  McOptions opts_;
  std::vector<long> steps_;
  int d_ = 0;
  std::size_t G_ = 0, K_ = 0;
  long N_ = 0;
  bool one_d_ = false;
  std::vector<double> logs_;
  std::vector<double> phi_, scale_;
  std::vector<Vec> dirs_;
};

std::vector<long> checkpoint_steps(const std::vector<double>& times, double dt,
                                   std::vector<std::size_t>& index_of) {
  std::vector<long> steps;
  for (double t : times) {
    if (!(t > 0)) throw McError("times must be positive");
    steps.push_back(std::max(1L, std::lround(t / dt)));
  }
  std::vector<long> uniq = steps;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  index_of.clear();
  for (long s : steps)
    index_of.push_back(std::lower_bound(uniq.begin(), uniq.end(), s) - uniq.begin());
  return uniq;
}

void validate_opts(const McOptions& opts) {
  if (opts.N < 1) throw McError("N must be positive");
  if (!(opts.dt > 0)) throw McError("dt must be positive");
}

}  // namespace

//---------------------------------------------------------------------------//

SupSearchSpec SupSearchSpec::grid1d(double lo, double hi, double step) {
  if (!(step > 0) || hi < lo) throw McError("invalid 1D grid");
  SupSearchSpec s;
  long n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  for (long i = 0; i <= n; ++i) s.points.push_back(Vec::Constant(1, lo + i * step));
  return s;
}

SupSearchSpec SupSearchSpec::single(const Vec& x) {
  SupSearchSpec s;
  s.points.push_back(x);
  return s;
}

void SupSearchSpec::validate(int dim) const {
  if (points.empty()) throw McError("search grid is empty");
  for (const auto& x : points)
    if (x.size() != dim) throw McError("grid point has the wrong dimension");
  for (const auto& v : directions) {
    if (v.size() != dim) throw McError("direction has the wrong dimension");
    if (std::fabs(v.norm() - 1) > 1e-12) throw McError("directions must be unit vectors");
  }
}

double grid_lambda_star(const DriftModel& model, const SupSearchSpec& spec) {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& x : spec.points) m = std::max(m, model.eta(x.data()));
  return -m;
}

LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  LinearFit f;
  const std::size_t n = x.size();
  if (n < 2) return f;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (n > 2) {
    double rss = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double r = y[i] - f.intercept - f.slope * x[i];
      rss += r * r;
    }
    f.slope_se = std::sqrt(rss / (n - 2) / sxx);
  }
  return f;
}

std::vector<KappaResult> estimate_kappa_grid(const DriftModel& model, const std::vector<double>& ps,
                                             const std::vector<double>& times,
                                             const SupSearchSpec& spec, const McOptions& opts) {
  validate_opts(opts);
  spec.validate(model.dim);
  for (double p : ps)
    if (!(p >= 1)) throw McError("p must be >= 1");
  std::vector<std::size_t> idx;
  std::vector<long> steps = checkpoint_steps(times, opts.dt, idx);
  Ensemble ens(model, spec, steps, opts);
  std::vector<KappaResult> out;
  for (double p : ps)
    for (std::size_t it = 0; it < times.size(); ++it) {
      KappaResult r = ens.kappa(p, idx[it], 0, opts.N);
      r.t = times[it];
      out.push_back(std::move(r));
    }
  return out;
}

KappaResult estimate_kappa_p(const DriftModel& model, double p, double t, const SupSearchSpec& spec,
                             const McOptions& opts) {
  return estimate_kappa_grid(model, {p}, {t}, spec, opts).front();
}

McEstimate estimate_Gp(const DriftModel& model, double p, const Vec& x, double t,
                       const McOptions& opts) {
  validate_opts(opts);
  if (x.size() != model.dim) throw McError("initial point has the wrong dimension");
  const long n = step_count(t, opts.dt);
  const double h = t / n;
  const std::vector<long> steps{n};
  const bool one_d = model.dim == 1 && static_cast<bool>(model.scalar);
  std::vector<double> I(opts.N, kNaN);
  parallel_for(static_cast<std::size_t>(opts.N), opts.threads, [&](std::size_t i) {
    RngStream rng(opts.seed, i);
    if (one_d) {
      Checkpoints1D cp;
      tangent_path_1d(model, x[0], h, steps, rng, opts.step, cp);
      if (!cp.divergent) I[i] = cp.integral[0];
    } else {
      CheckpointsND cp;
      tangent_path_nd(model, x.data(), h, steps, rng, opts.step, cp);
      if (!cp.divergent) I[i] = cp.integral[0];
    }
  });
  McEstimate est;
  est.n = opts.N;
  const double log_ceiling = std::log(kExpCeiling);
  double sum = 0;
  long used = 0;
  std::vector<double> vals;
  vals.reserve(opts.N);
  for (long i = 0; i < opts.N; ++i) {
    if (std::isnan(I[i])) {
      ++est.excluded;
      continue;
    }
    double a = p * I[i];
    double v;
    if (a > log_ceiling) {
      v = kExpCeiling;
      ++est.saturated;
    } else {
      v = std::exp(a);
    }
    vals.push_back(v);
    sum += v;
    ++used;
  }
  if (used == 0) throw McError("all paths divergent");
  double mean = sum / used;
  double ss = 0;
  for (double v : vals) ss += (v - mean) * (v - mean);
  est.value = mean;
  est.stderr_ = used > 1 ? std::sqrt(ss / (used - 1) / used) : 0;
  return est;
}

LyapunovResult estimate_lyapunov(const DriftModel& model, double p, double T,
                                 const SupSearchSpec& spec, const McOptions& opts, int checkpoints) {
  validate_opts(opts);
  spec.validate(model.dim);
  if (!(T > 0)) throw McError("T must be positive");
  if (checkpoints < 4) throw McError("need at least 4 checkpoints");
  LyapunovResult res;
  for (int j = 1; j <= checkpoints; ++j) res.times.push_back(T * j / checkpoints);
  std::vector<std::size_t> idx;
  std::vector<long> steps = checkpoint_steps(res.times, opts.dt, idx);
  Ensemble ens(model, spec, steps, opts);

  auto fit_range = [&](long i0, long i1, std::vector<double>* kappa_out) {
    std::vector<double> xs, ys;
    for (std::size_t j = 0; j < res.times.size(); ++j) {
      double k = ens.kappa(p, idx[j], i0, i1).estimate.value;
      if (kappa_out) kappa_out->push_back(k);
      if (res.times[j] >= T / 2 - 1e-12 && k > 0) {
        xs.push_back(res.times[j]);
        ys.push_back(std::log(k));
      }
    }
    return least_squares(xs, ys);
  };

  LinearFit all = fit_range(0, opts.N, &res.kappa);
  for (std::size_t j = 0; j < res.times.size(); ++j)
    res.local_rate.push_back(std::log(res.kappa[j]) / res.times[j]);
  res.rate.value = all.slope;
  res.rate.n = opts.N;

  const int B = opts.N >= 100 ? 10 : 1;
  if (B > 1) {
    std::vector<double> slopes;
    long per = opts.N / B;
    for (int b = 0; b < B; ++b) {
      long i0 = b * per, i1 = b == B - 1 ? opts.N : (b + 1) * per;
      slopes.push_back(fit_range(i0, i1, nullptr).slope);
    }
    double m = 0;
    for (double s : slopes) m += s;
    m /= B;
    double ss = 0;
    for (double s : slopes) ss += (s - m) * (s - m);
    res.rate.stderr_ = std::sqrt(ss / (B - 1) / B);
  } else {
    res.rate.stderr_ = all.slope_se;
  }

  // Compare the slope on the two quarters of the fit window.
  std::vector<double> x1, y1, x2, y2;
  for (std::size_t j = 0; j < res.times.size(); ++j) {
    if (res.times[j] < T / 2 - 1e-12 || !(res.kappa[j] > 0)) continue;
    double lk = std::log(res.kappa[j]);
    if (res.times[j] <= 0.75 * T + 1e-12) {
      x1.push_back(res.times[j]);
      y1.push_back(lk);
    }
    if (res.times[j] >= 0.75 * T - 1e-12) {
      x2.push_back(res.times[j]);
      y2.push_back(lk);
    }
  }
  if (x1.size() >= 2 && x2.size() >= 2) {
    double s1 = least_squares(x1, y1).slope, s2 = least_squares(x2, y2).slope;
    double tol = std::max(4 * res.rate.stderr_, 0.05 * std::max(1.0, std::fabs(all.slope)));
    if (std::fabs(s1 - s2) > tol) {
      res.checkpoints_agree = false;
      char buf[200];
      std::snprintf(buf, sizeof buf,
                    "slope over [T/2,3T/4] is %.4g but over [3T/4,T] is %.4g; increase T", s1, s2);
      res.warning = buf;
    }
  }
  return res;
}

SubmultiplicativityReport check_submultiplicativity(const DriftModel& model, double p, double t,
                                                    double s, const SupSearchSpec& spec,
                                                    const McOptions& opts) {
  auto r = estimate_kappa_grid(model, {p}, {t, s, t + s}, spec, opts);
  SubmultiplicativityReport rep;
  rep.kappa_t = r[0].estimate.value;
  rep.se_t = r[0].estimate.stderr_;
  rep.kappa_s = r[1].estimate.value;
  rep.se_s = r[1].estimate.stderr_;
  rep.kappa_ts = r[2].estimate.value;
  rep.se_ts = r[2].estimate.stderr_;
  rep.product = rep.kappa_t * rep.kappa_s;
  double se_prod = std::hypot(rep.kappa_s * rep.se_t, rep.kappa_t * rep.se_s);
  rep.combined_se = std::hypot(rep.se_ts, se_prod);
  rep.pass = rep.kappa_ts <= rep.product + 3 * rep.combined_se;
  return rep;
}

MonotonePReport check_monotone_p(const DriftModel& model, double t, const std::vector<double>& ps,
                                 const SupSearchSpec& spec, const McOptions& opts) {
  if (!std::is_sorted(ps.begin(), ps.end())) throw McError("p-list must be sorted ascending");
  auto r = estimate_kappa_grid(model, ps, {t}, spec, opts);
  MonotonePReport rep;
  rep.ps = ps;
  rep.pass = true;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    rep.kappa.push_back(r[i].estimate.value);
    rep.se.push_back(r[i].estimate.stderr_);
    if (i > 0) {
      double tol = 3 * std::hypot(rep.se[i], rep.se[i - 1]);
      if (rep.kappa[i] < rep.kappa[i - 1] - tol) rep.pass = false;
    }
  }
  return rep;
}

BakryEmeryReport check_bakry_emery(const DriftModel& model, double p, double t,
                                   const SupSearchSpec& spec, const McOptions& opts,
                                   const BakryEmeryOptions& be) {
  BakryEmeryReport rep;
  if (model.lambda_star) {
    rep.lambda_star = *model.lambda_star;
  } else {
    rep.lambda_star = grid_lambda_star(model, spec);
    rep.lambda_from_grid = true;
  }
  auto main = estimate_kappa_p(model, p, t, spec, opts);
  rep.kappa = main.estimate.value;
  rep.se = main.estimate.stderr_;
  rep.bound = std::exp(-rep.lambda_star * t);
  rep.bound_pass = rep.kappa <= rep.bound + 3 * rep.se;

  if (be.short_time) {
    McOptions so = opts;
    so.dt = be.short_dt;
    auto r = estimate_kappa_grid(model, {p}, be.short_times, spec, so);
    std::vector<double> lx, ly;
    double cmax = 0;
    for (std::size_t i = 0; i < be.short_times.size(); ++i) {
      double ti = be.short_times[i];
      double res = std::fabs(r[i].estimate.value - (1 - rep.lambda_star * ti));
      rep.short_times.push_back(ti);
      rep.short_residuals.push_back(res);
      cmax = std::max(cmax, res / (ti * ti));
      if (res > 0) {
        lx.push_back(std::log(ti));
        ly.push_back(std::log(res));
      }
    }
    rep.fitted_C = cmax;
    // All residuals at rounding level counts as exact second order.
    double scale = 0;
    for (double ti : be.short_times) scale = std::max(scale, ti * ti);
    bool negligible = cmax * scale < 1e-12;
    if (lx.size() >= 2 && !negligible) {
      rep.loglog_slope = least_squares(lx, ly).slope;
      rep.short_time_pass = rep.loglog_slope >= be.min_slope;
    } else {
      rep.loglog_slope = 2;
      rep.short_time_pass = true;
    }
  }
  return rep;
}

}  // namespace wcontract
