#include "wcontract/run.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <ostream>
#include <stdexcept>

#include "wcontract/certify.hpp"
#include "wcontract/coupling.hpp"
#include "wcontract/fk.hpp"
#include "wcontract/mc.hpp"
#include "wcontract/output.hpp"
#include "wcontract/parallel.hpp"

#ifndef WCONTRACT_VERSION
#define WCONTRACT_VERSION "0.0.0"
#endif

namespace wcontract {

std::string tool_version() { return WCONTRACT_VERSION; }

namespace {

// Numerical failure that still leaves partial artifacts behind.
struct Unconverged {
  std::string what;
};

bool is_builtin_potential(const std::string& s) { return s == "U0" || s == "U1" || s == "U2"; }

ScalarExpr potential_expr(const ExperimentConfig& cfg) {
  const std::string& src = cfg.text("model", "potential");
  if (is_builtin_potential(src)) return builtin_potential(src);
  return parse_expression(src, cfg.params());
}

std::string rs(double v) { return format_real(v); }

class Artifacts {
 public:
  Artifacts(const ExperimentConfig& cfg, RunReport& report)
      : dir_(cfg.text("output", "dir")), report_(report) {
    const std::string& f = cfg.text("output", "formats");
    csv_ = f.find("csv") != std::string::npos;
    json_ = f.find("json") != std::string::npos;
    svg_ = f.find("svg") != std::string::npos;
  }
  void csv(const std::string& name, const CsvTable& t) {
    if (csv_) put(name, t.str());
  }
  void json(const std::string& name, const JsonWriter& w) {
    if (json_) put(name, w.str());
  }
  void svg(const std::string& name, const std::string& text) {
    if (svg_) put(name, text);
  }
  void put(const std::string& name, const std::string& text) {
    std::string path = (std::filesystem::path(dir_) / name).string();
    write_text_file(path, text);
    report_.files.push_back(path);
  }
  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
  RunReport& report_;
  bool csv_ = true, json_ = true, svg_ = true;
};

McOptions mc_options(const ExperimentConfig& cfg, int threads) {
  McOptions o;
  o.N = cfg.integer("numeric", "N");
  o.dt = cfg.real("numeric", "dt");
  o.seed = cfg.seed();
  o.threads = threads;
  if (o.N < 1) throw ConfigError("numeric.N", 0, "numeric.N must be positive");
  if (!(o.dt > 0)) throw ConfigError("numeric.dt", 0, "numeric.dt must be positive");
  return o;
}

Vec to_vec(const std::vector<double>& v) {
  Vec x(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) x[i] = v[i];
  return x;
}

Vec initial_state(const ExperimentConfig& cfg, const char* key, int dim) {
  std::vector<double> v = cfg.list("operation", key);
  if (v.size() == 1 && dim > 1) v.assign(dim, v[0]);
  if (static_cast<int>(v.size()) != dim)
    throw ConfigError(std::string("operation.") + key, 0,
                      std::string("operation.") + key + ": expected " + std::to_string(dim) +
                          " components");
  return to_vec(v);
}

SupSearchSpec search_spec(const ExperimentConfig& cfg, const DriftModel& model) {
  if (model.dim == 1) {
    double step = cfg.real("operation", "grid_step");
    if (!(step > 0)) throw ConfigError("operation.grid_step", 0, "operation.grid_step must be positive");
    return SupSearchSpec::grid1d(cfg.real("operation", "grid_lo"), cfg.real("operation", "grid_hi"),
                                 step);
  }
  Mat pts = cfg.matrix("operation", "points");
  if (pts.size() == 0) return SupSearchSpec::single(initial_state(cfg, "x0", model.dim));
  if (pts.cols() != model.dim)
    throw ConfigError("operation.points", 0, "operation.points: rows must have model dimension");
  SupSearchSpec spec;
  for (Eigen::Index r = 0; r < pts.rows(); ++r) spec.points.push_back(pts.row(r).transpose());
  return spec;
}

EigenOptions eigen_options(const ExperimentConfig& cfg) {
  EigenOptions e;
  e.tol = cfg.real("numeric", "tol");
  e.max_iterations = cfg.integer("numeric", "max_iterations");
  const std::string& m = cfg.text("numeric", "method");
  e.method = m == "sturm" ? EigenMethod::sturm : m == "power" ? EigenMethod::power : EigenMethod::automatic;
  return e;
}

Boundary boundary_of(const ExperimentConfig& cfg) {
  return cfg.text("numeric", "boundary") == "dirichlet" ? Boundary::dirichlet : Boundary::reflecting;
}

const char* method_name(EigenMethod m) {
  switch (m) {
    case EigenMethod::sturm: return "sturm";
    case EigenMethod::power: return "power";
    default: return "automatic";
  }
}

void write_constants(JsonWriter& w, const ContractionConstants& c) {
  w.begin_object("constants");
  for (const auto& [name, v] : c.table()) w.value(name, v);
  w.end_object();
  w.begin_object("log");
  w.value("fprime_R1", c.log_fprime_R1);
  w.value("eps", c.log_eps);
  w.value("kstar", c.log_kstar);
  w.value("Cp", c.log_Cp);
  w.value("lambdap", c.log_lambdap);
  w.end_object();
  w.begin_object("metric");
  w.value("norm_Q", c.norm_Q);
  w.value("norm_Q_inv", c.norm_Q_inv);
  w.value("norm_Q_inv_half", c.norm_Q_inv_half);
  w.value("norm_Q22", c.norm_Q22);
  w.value("rho2", c.rho2);
  w.value("S_star", c.S_star);
  w.end_object();
}

//---------------------------------------------------------------------------//
// Operations
//---------------------------------------------------------------------------//

std::string op_fk_eig(const ExperimentConfig& cfg, Artifacts& out) {
  const double theta = cfg.real("model", "theta");
  const double p = cfg.real("operation", "p");
  DriftModel model = build_model(cfg);
  if (model.dim != 1 || !model.scalar)
    throw ConfigError("model.kind", 0, "fk-eig needs a one-dimensional model");
  FKDiscretization op = build_operator(model, p, cfg.real("numeric", "x_min"),
                                       cfg.real("numeric", "x_max"), cfg.real("numeric", "dx"),
                                       boundary_of(cfg));
  EigenResult r = leading_eigenvalue(op, eigen_options(cfg));

  CsvTable t({"p", "theta2", "lambda", "J_over_p", "converged", "residual", "iterations", "method"});
  t.add_row({rs(p), rs(theta * theta), rs(r.lambda), rs(r.lambda / p), r.converged ? "1" : "0",
             rs(r.residual), std::to_string(r.iterations), method_name(r.method)});
  out.csv("fk_eig.csv", t);
  CsvTable ev({"x", "f"});
  for (int i = 0; i < op.n; ++i) ev.add_row({rs(op.x[i]), rs(r.eigenvector.empty() ? 0.0 : r.eigenvector[i])});
  out.csv("fk_eigenvector.csv", ev);

  JsonWriter w;
  w.begin_object();
  w.value("p", p).value("theta2", theta * theta).value("nodes", op.n);
  w.value("lambda", r.lambda).value("J_over_p", r.lambda / p);
  w.value("bracket_lo", r.lo).value("bracket_hi", r.hi);
  w.value("residual", r.residual).value("iterations", r.iterations);
  w.value("method", method_name(r.method)).value("converged", r.converged);
  w.value("diagnostic", r.diagnostic);
  w.end_object();
  out.json("fk_eig.json", w);
  if (!r.converged) throw Unconverged{"eigenvalue solver did not converge: " + r.diagnostic};
  return "J/p = " + rs(r.lambda / p);
}

std::string op_fk_sweep(const ExperimentConfig& cfg, Artifacts& out, int threads) {
  auto ps = linspace(cfg.real("operation", "p_min"), cfg.real("operation", "p_max"),
                     static_cast<int>(cfg.integer("operation", "p_count")));
  auto th = linspace(cfg.real("operation", "theta2_min"), cfg.real("operation", "theta2_max"),
                     static_cast<int>(cfg.integer("operation", "theta2_count")));
  for (double v : th)
    if (!(v > 0)) throw ConfigError("operation.theta2_min", 0, "theta2 values must be positive");
  DriftModel probe = build_model(cfg);
  if (probe.dim != 1 || !probe.scalar)
    throw ConfigError("model.kind", 0, "fk-sweep needs a one-dimensional model");
  SweepOptions so;
  so.x_min = cfg.real("numeric", "x_min");
  so.x_max = cfg.real("numeric", "x_max");
  so.dx = cfg.real("numeric", "dx");
  so.boundary = boundary_of(cfg);
  so.eigen = eigen_options(cfg);
  so.threads = threads;
  // build once to surface domain errors as config errors
  build_operator(probe, 1, so.x_min, so.x_max, so.dx, so.boundary);
  SweepResult r = sweep([&](double theta) { return build_model(cfg, theta); }, ps, th, so);

  CsvTable t({"p", "theta2", "J_over_p", "converged"});
  long bad = 0;
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t j = 0; j < th.size(); ++j) {
      std::size_t k = i * th.size() + j;
      t.add_row({rs(ps[i]), rs(th[j]), rs(r.values[k]), r.converged[k] ? "1" : "0"});
      if (!r.converged[k]) ++bad;
      else {
        lo = std::min(lo, r.values[k]);
        hi = std::max(hi, r.values[k]);
      }
    }
  out.csv("fk_sweep.csv", t);
  HeatmapOptions ho;
  ho.lo = cfg.real("output", "color_lo");
  ho.hi = cfg.real("output", "color_hi");
  ho.title = "J(p eta)/p, " + cfg.text("model", "potential");
  out.svg("fk_sweep.svg", render_heatmap(r, ho));
  JsonWriter w;
  w.begin_object();
  w.value("p_count", static_cast<long>(ps.size())).value("theta2_count", static_cast<long>(th.size()));
  w.value("min", lo).value("max", hi).value("unconverged", bad);
  w.end_object();
  out.json("fk_sweep.json", w);
  if (bad) throw Unconverged{std::to_string(bad) + " sweep cells did not converge"};
  return std::to_string(t.rows()) + " cells, J/p in [" + rs(lo) + ", " + rs(hi) + "]";
}

std::string op_kappa(const ExperimentConfig& cfg, Artifacts& out, int threads) {
  DriftModel model = build_model(cfg);
  SupSearchSpec spec = search_spec(cfg, model);
  McOptions o = mc_options(cfg, threads);
  std::vector<double> ps = cfg.list("operation", "ps");
  std::vector<double> times = cfg.list("operation", "times");
  if (times.empty()) times.push_back(cfg.real("operation", "t"));
  if (ps.empty()) ps.push_back(cfg.real("operation", "p"));
  auto res = estimate_kappa_grid(model, ps, times, spec, o);

  std::vector<std::string> header{"t", "p", "estimate", "stderr", "n", "excluded"};
  const int d = model.dim;
  for (int i = 0; i < d; ++i) header.push_back(d == 1 ? "argmax_x" : "argmax_x" + std::to_string(i));
  for (int i = 0; i < d; ++i) header.push_back(d == 1 ? "argmax_v" : "argmax_v" + std::to_string(i));
  header.push_back("grid_edge");
  CsvTable t(header);
  bool edge = false;
  for (std::size_t it = 0; it < times.size(); ++it)
    for (std::size_t ip = 0; ip < ps.size(); ++ip) {
      const KappaResult& k = res[ip * times.size() + it];
      std::vector<std::string> row{rs(k.t), rs(k.p), rs(k.estimate.value), rs(k.estimate.stderr_),
                                   std::to_string(k.estimate.n), std::to_string(k.estimate.excluded)};
      for (int i = 0; i < d; ++i) row.push_back(rs(k.argmax_x[i]));
      for (int i = 0; i < d; ++i) row.push_back(rs(k.argmax_v[i]));
      row.push_back(k.grid_edge ? "1" : "0");
      edge = edge || k.grid_edge;
      t.add_row(row);
    }
  out.csv("kappa.csv", t);
  JsonWriter w;
  w.begin_object();
  w.value("grid_points", static_cast<long>(spec.points.size()));
  w.value("grid_edge_maximum", edge);
  w.begin_array("results");
  for (const auto& k : res) {
    w.begin_object();
    w.value("t", k.t).value("p", k.p).value("estimate", k.estimate.value);
    w.value("stderr", k.estimate.stderr_).value("excluded", k.estimate.excluded);
    w.end_object();
  }
  w.end_array();
  w.end_object();
  out.json("kappa.json", w);
  return "kappa(" + rs(res.front().t) + ") = " + rs(res.front().estimate.value) +
         (edge ? " (maximum on the grid edge)" : "");
}

std::string op_gp(const ExperimentConfig& cfg, Artifacts& out, int threads) {
  DriftModel model = build_model(cfg);
  McOptions o = mc_options(cfg, threads);
  const double p = cfg.real("operation", "p"), t = cfg.real("operation", "t");
  Vec x0 = initial_state(cfg, "x0", model.dim);
  McEstimate g = estimate_Gp(model, p, x0, t, o);
  const double rate = std::log(g.value) / t;

  std::vector<std::string> header{"p", "t"};
  for (int i = 0; i < model.dim; ++i) header.push_back(model.dim == 1 ? "x" : "x" + std::to_string(i));
  for (const char* h : {"estimate", "stderr", "log_rate", "n", "excluded", "saturated"}) header.push_back(h);
  CsvTable tb(header);
  std::vector<std::string> row{rs(p), rs(t)};
  for (int i = 0; i < model.dim; ++i) row.push_back(rs(x0[i]));
  for (auto s : {rs(g.value), rs(g.stderr_), rs(rate), std::to_string(g.n), std::to_string(g.excluded),
                 std::to_string(g.saturated)})
    row.push_back(s);
  tb.add_row(row);
  out.csv("gp.csv", tb);
  JsonWriter w;
  w.begin_object();
  w.value("p", p).value("t", t).value("estimate", g.value).value("stderr", g.stderr_);
  w.value("log_rate", rate).value("n", g.n).value("excluded", g.excluded).value("saturated", g.saturated);
  w.end_object();
  out.json("gp.json", w);
  return "(1/t) ln G = " + rs(rate);
}

std::string op_lyapunov(const ExperimentConfig& cfg, Artifacts& out, int threads) {
  DriftModel model = build_model(cfg);
  SupSearchSpec spec = search_spec(cfg, model);
  McOptions o = mc_options(cfg, threads);
  const double p = cfg.real("operation", "p"), T = cfg.real("numeric", "T");
  LyapunovResult r = estimate_lyapunov(model, p, T, spec, o,
                                       static_cast<int>(cfg.integer("numeric", "checkpoints")));
  CsvTable t({"t", "kappa", "local_rate"});
  for (std::size_t i = 0; i < r.times.size(); ++i)
    t.add_row({rs(r.times[i]), rs(r.kappa[i]), rs(r.local_rate[i])});
  out.csv("lyapunov.csv", t);
  JsonWriter w;
  w.begin_object();
  w.value("p", p).value("T", T).value("rate", r.rate.value).value("stderr", r.rate.stderr_);
  w.value("checkpoints_agree", r.checkpoints_agree).value("warning", r.warning);
  w.end_object();
  out.json("lyapunov.json", w);
  return "Lambda_p = " + rs(r.rate.value) + " +- " + rs(r.rate.stderr_);
}

CouplingParams params_from_config(const ExperimentConfig& cfg, double p) {
  if (cfg.text("coupling", "source") == "model") {
    DriftModel m = build_model(cfg);
    if (cfg.text("model", "kind") == "colored_noise") {
      ColoredNoiseOptions co;
      co.eta_cv = cfg.real("model", "eta_cv");
      m = colored_noise(potential_expr(cfg), cfg.matrix("model", "A"), cfg.matrix("model", "sigma0"), co).yz;
    }
    CouplingParams cp = CouplingParams::from_model(m, p, cfg.real("numeric", "xi"));
    cp.use_Q_norm = cfg.flag("coupling", "use_Q_norm");
    return cp;
  }
  const long n = cfg.integer("coupling", "n"), mz = cfg.integer("coupling", "m");
  if (n < 1 || mz < 1) throw ConfigError("coupling.m", 0, "coupling block sizes must be positive");
  Mat Q = cfg.matrix("coupling", "Q");
  if (Q.rows() == 1 && Q.cols() == 1) Q = Q(0, 0) * Mat::Identity(n + mz, n + mz);
  if (Q.rows() != n + mz || Q.cols() != n + mz)
    throw ConfigError("coupling.Q", 0, "coupling.Q must be (n+m) x (n+m)");
  CouplingParams cp;
  cp.rho1 = cfg.real("coupling", "rho1");
  cp.L1 = cfg.real("coupling", "L1");
  cp.L2 = cfg.real("coupling", "L2");
  cp.L3 = cfg.real("coupling", "L3");
  cp.theta = cfg.real("coupling", "theta");
  cp.metric = make_metric(Q, cfg.real("coupling", "rho2"), cfg.real("coupling", "S_star"));
  cp.m = static_cast<int>(mz);
  cp.p = p;
  cp.xi = cfg.real("numeric", "xi");
  cp.use_Q_norm = cfg.flag("coupling", "use_Q_norm");
  return cp;
}

std::string op_constants(const ExperimentConfig& cfg, Artifacts& out) {
  CouplingParams cp = params_from_config(cfg, cfg.real("operation", "p"));
  ContractionConstants c = compute_constants(cp);
  JsonWriter w;
  w.begin_object();
  w.begin_object("params");
  w.value("rho1", cp.rho1).value("L1", cp.L1).value("L2", cp.L2).value("L3", cp.L3);
  w.value("theta", cp.theta).value("rho2", cp.metric.rho2).value("Sstar", cp.metric.S_star);
  w.value("p", cp.p).value("m", cp.m).value("use_Q_norm", cp.use_Q_norm);
  w.end_object();
  write_constants(w, c);
  w.end_object();
  out.json("constants.json", w);
  CsvTable t({"name", "value"});
  for (const auto& [name, v] : c.table()) t.add_row({name, rs(v)});
  out.csv("constants.csv", t);
  return "lambda_p = " + rs(c.lambdap) + ", C_p = " + rs(c.Cp);
}

std::string op_couple(const ExperimentConfig& cfg, Artifacts& out, int threads) {
  if (cfg.text("model", "kind") != "colored_noise")
    throw ConfigError("model.kind", 0, "couple needs model.kind = colored_noise");
  ColoredNoiseOptions co;
  co.eta_cv = cfg.real("model", "eta_cv");
  ColoredNoiseModel cn =
      colored_noise(potential_expr(cfg), cfg.matrix("model", "A"), cfg.matrix("model", "sigma0"), co);
  const double p = cfg.real("operation", "p");
  CouplingOptions o;
  o.N = cfg.integer("numeric", "N");
  o.T = cfg.real("numeric", "T");
  o.dt = cfg.real("numeric", "dt");
  o.checkpoints = static_cast<int>(cfg.integer("numeric", "checkpoints"));
  o.batches = static_cast<int>(cfg.integer("numeric", "batches"));
  o.fit_from = cfg.real("numeric", "fit_from");
  o.xi = cfg.real("numeric", "xi");
  o.seed = cfg.seed();
  o.threads = threads;
  CouplingParams cp = CouplingParams::from_model(cn.yz, p, o.xi);
  cp.use_Q_norm = cfg.flag("coupling", "use_Q_norm");
  ContractionConstants c = compute_constants(cp);

  // initial conditions are given in the original (q, w) variables
  const int d = cn.qw.dim;
  Vec x0 = initial_state(cfg, "x0", d);
  Vec x0p = cfg.list("operation", "x0p").empty() ? Vec(-x0) : initial_state(cfg, "x0p", d);
  Vec y0 = cn.T * x0, y0p = cn.T * x0p;
  CouplingTrace tr = simulate_coupling(cn.yz, c, y0, y0p, o);
  std::optional<CouplingTrace> tr2;
  if (cfg.flag("operation", "sensitivity")) {
    CouplingOptions o2 = o;
    o2.xi = 2 * o.xi;
    tr2 = simulate_coupling(cn.yz, c, y0, y0p, o2);
  }

  CsvTable t({"t", "mean_f_R", "mean_g_S", "mean_omega", "mean_fg", "se_f_R", "se_g_S", "se_omega",
              "se_fg"});
  for (std::size_t i = 0; i < tr.times.size(); ++i)
    t.add_row({rs(tr.times[i]), rs(tr.mean_f[i]), rs(tr.mean_g[i]), rs(tr.mean_omega[i]),
               rs(tr.mean_fg[i]), rs(tr.se_f[i]), rs(tr.se_g[i]), rs(tr.se_omega[i]), rs(tr.se_fg[i])});
  out.csv("couple.csv", t);

  const bool rate_ok = tr.rate >= c.lambdap - 3 * tr.rate_se;
  JsonWriter w;
  w.begin_object();
  w.value("p", p).value("xi", o.xi).value("eta_cv", cn.eta_cv).value("N", tr.N);
  w.value("excluded", tr.excluded).value("T", o.T).value("dt", o.dt);
  w.value("rate", tr.rate).value("rate_se", tr.rate_se).value("fit_points", tr.fit_points);
  w.value("lambdap", c.lambdap).value("log_lambdap", c.log_lambdap);
  w.value("rate_at_least_lambdap", rate_ok);
  w.value("max_orthogonality_dev", tr.max_orthogonality_dev);
  w.value("fallback_count", tr.fallback_count).value("warning", tr.warning);
  if (tr2) {
    w.begin_object("sensitivity");
    w.value("xi", 2 * o.xi).value("rate", tr2->rate).value("rate_se", tr2->rate_se);
    w.value("rate_change", tr2->rate - tr.rate);
    w.end_object();
  }
  write_constants(w, c);
  w.end_object();
  out.json("couple.json", w);
  return "rate = " + rs(tr.rate) + " +- " + rs(tr.rate_se) + ", lambda_p = " + rs(c.lambdap);
}

std::string op_certify(const ExperimentConfig& cfg, Artifacts& out) {
  const double p = cfg.real("operation", "p");
  double C1 = cfg.real("certify", "C1"), l1 = cfg.real("certify", "lambda1");
  std::string origin = "config";
  if (!(C1 > 0) || !(l1 > 0)) {
    ContractionConstants c1 = compute_constants(params_from_config(cfg, 1.0));
    if (!(C1 > 0)) C1 = c1.Cp;
    if (!(l1 > 0)) l1 = c1.lambdap;
    origin = "constants at p = 1";
  }
  RhoPrimeCertificate r = certify_rho_prime(
      p, cfg.real("certify", "mu_eta"), cfg.real("certify", "L_eta"), C1, l1,
      cfg.real("certify", "sigma_norm"), cfg.real("certify", "R"), cfg.real("certify", "mu_abs_moment"),
      cfg.real("certify", "rho"));
  JsonWriter w;
  w.begin_object();
  w.value("p", p).value("C1", C1).value("lambda1", l1).value("C1_lambda1_from", origin);
  w.value("A", r.A).value("rho_prime", r.rho_prime).value("rate", r.rate).value("contracts", r.contracts);
  const double delta = cfg.real("certify", "eta_delta");
  if (delta > 0) {
    EtaBar eb = eta_bar_construct(delta, cfg.real("certify", "eta_q"), cfg.real("certify", "eta_S"),
                                  cfg.real("certify", "eta_S2"), cfg.matrix("certify", "eta_Q"));
    w.begin_object("eta_bar");
    w.value("delta", eb.delta).value("q", eb.q).value("S", eb.S).value("S2", eb.S2);
    w.value("outer", -eb.delta / eb.q).value("lipschitz", eb.lipschitz());
    w.end_object();
    CsvTable t({"u", "eta_bar"});
    const int n = 101;
    for (int i = 0; i < n; ++i) {
      double u = 1.5 * eb.S2 * i / (n - 1);
      t.add_row({rs(u), rs(eb.of_radius(u))});
    }
    out.csv("eta_bar.csv", t);
  }
  w.end_object();
  out.json("certify.json", w);
  return "rho' = " + rs(r.rho_prime) + ", A = " + rs(r.A);
}

std::string op_kinetic_rate(const ExperimentConfig& cfg, Artifacts& out) {
  const double gamma = cfg.real("kinetic", "gamma");
  const double rate = kinetic_kappa_inf_rate(gamma, cfg.real("kinetic", "xi0"));
  auto km = kinetic_matrix(cfg.real("kinetic", "ell"), cfg.real("kinetic", "Lambda"), gamma,
                           static_cast<int>(cfg.integer("kinetic", "d")));
  JsonWriter w;
  w.begin_object();
  w.value("gamma", gamma).value("xi0", cfg.real("kinetic", "xi0")).value("rate", rate);
  w.begin_object("matrix");
  w.value("supported", km.has_value());
  if (km) {
    w.value("a", km->a).value("c", km->c).value("rho", km->rho);
    w.begin_array("M");
    for (Eigen::Index i = 0; i < km->M.rows(); ++i) {
      std::vector<double> row(km->M.cols());
      for (Eigen::Index j = 0; j < km->M.cols(); ++j) row[j] = km->M(i, j);
      w.array("", row);
    }
    w.end_array();
  }
  w.end_object();
  w.end_object();
  out.json("kinetic.json", w);
  return "rate = " + rs(rate) + (km ? "" : ", matrix unsupported (gamma^2 < 4 Lambda)");
}

std::string op_mass_bound(const ExperimentConfig& cfg, Artifacts& out) {
  MassBound mb = elliptic_mass_bound(cfg.real("mass", "K"), cfg.real("mass", "R"), cfg.real("mass", "R2"),
                                     cfg.real("mass", "theta"), cfg.real("mass", "d"));
  JsonWriter w;
  w.begin_object();
  w.value("C", mb.C).value("eps", mb.eps).value("q", mb.q);
  w.end_object();
  out.json("mass_bound.json", w);
  return "C = " + rs(mb.C) + ", eps = " + rs(mb.eps) + ", q = " + rs(mb.q);
}

std::string dispatch(const ExperimentConfig& cfg, Artifacts& out, int threads) {
  const std::string& op = cfg.operation();
  if (op == "fk-eig") return op_fk_eig(cfg, out);
  if (op == "fk-sweep") return op_fk_sweep(cfg, out, threads);
  if (op == "kappa") return op_kappa(cfg, out, threads);
  if (op == "gp") return op_gp(cfg, out, threads);
  if (op == "lyapunov") return op_lyapunov(cfg, out, threads);
  if (op == "couple") return op_couple(cfg, out, threads);
  if (op == "constants") return op_constants(cfg, out);
  if (op == "certify") return op_certify(cfg, out);
  if (op == "kinetic-rate") return op_kinetic_rate(cfg, out);
  if (op == "mass-bound") return op_mass_bound(cfg, out);
  throw ConfigError("operation.name", 0, "unknown operation " + op);
}

void write_manifest(const ExperimentConfig& cfg, Artifacts& out, RunReport& report) {
  JsonWriter w;
  w.begin_object();
  w.value("tool", "wcontract").value("version", tool_version());
  w.value("operation", cfg.operation());
  w.value("seed", std::to_string(cfg.seed()));
  w.value("exit_code", report.exit_code);
  w.value("summary", report.summary).value("error", report.error);
  w.begin_array("artifacts");
  for (const auto& f : report.files) w.value("", std::filesystem::path(f).filename().string());
  w.end_array();
  w.begin_object("config");
  for (const auto& [sec, keys] : cfg.sections()) {
    w.begin_object(sec);
    for (const auto& [k, v] : keys) w.value(k, v);
    w.end_object();
  }
  w.end_object();
  w.value("config_text", cfg.serialize());
  w.end_object();
  out.put("manifest.json", w.str());
}

}  // namespace

DriftModel build_model(const ExperimentConfig& cfg, std::optional<double> theta_opt) {
  const std::string& kind = cfg.text("model", "kind");
  const double theta = theta_opt ? *theta_opt : cfg.real("model", "theta");
  if (kind == "overdamped1d") {
    const std::string& src = cfg.text("model", "potential");
    if (is_builtin_potential(src)) return overdamped_builtin(src, theta);
    return overdamped1d(potential_expr(cfg), theta);
  }
  if (kind == "ornstein_uhlenbeck")
    return ornstein_uhlenbeck(cfg.real("model", "rate"), static_cast<int>(cfg.integer("model", "dim")), theta);
  if (kind == "kinetic_langevin")
    return kinetic_langevin(potential_expr(cfg), cfg.real("model", "gamma"), theta,
                            static_cast<int>(cfg.integer("model", "dim")));
  if (kind == "colored_noise") {
    ColoredNoiseOptions co;
    co.eta_cv = cfg.real("model", "eta_cv");
    return colored_noise(potential_expr(cfg), cfg.matrix("model", "A"), cfg.matrix("model", "sigma0"), co).qw;
  }
  if (kind == "linear") {
    Mat A = cfg.matrix("model", "drift_matrix");
    if (A.size() == 0 || A.rows() != A.cols())
      throw ConfigError("model.drift_matrix", 0, "model.drift_matrix must be a square matrix");
    Mat S = cfg.matrix("model", "sigma_matrix");
    if (S.size() == 0) S = std::sqrt(2.0) * theta * Mat::Identity(A.rows(), A.rows());
    if (S.rows() != A.rows())
      throw ConfigError("model.sigma_matrix", 0, "model.sigma_matrix needs one row per dimension");
    return linear_model(A, S);
  }
  throw ConfigError("model.kind", 0, "operation " + cfg.operation() + " needs a model (model.kind)");
}

RunReport run(const ExperimentConfig& cfg, int threads) {
  RunReport report;
  const auto start = std::chrono::steady_clock::now();
  const int nthreads = resolve_threads(threads);
  Artifacts out(cfg, report);
  try {
    report.summary = dispatch(cfg, out, nthreads);
  } catch (const Unconverged& e) {
    report.exit_code = exit_numerical;
    report.error = e.what;
  } catch (const ConfigError& e) {
    report.exit_code = exit_config;
    report.error = e.what();
  } catch (const ParseError& e) {
    report.exit_code = exit_config;
    report.error = std::string("model.potential: ") + e.what();
  } catch (const FKError& e) {
    report.exit_code = exit_config;
    report.error = e.what();
  } catch (const std::invalid_argument& e) {
    report.exit_code = exit_config;
    report.error = e.what();
  } catch (const McError& e) {
    report.exit_code = exit_numerical;
    report.error = e.what();
  } catch (const EvalError& e) {
    report.exit_code = exit_numerical;
    report.error = e.what();
  } catch (const std::exception& e) {
    report.exit_code = exit_numerical;
    report.error = e.what();
  }
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  try {
    write_manifest(cfg, out, report);
  } catch (const std::exception& e) {
    if (report.exit_code == exit_ok) report.exit_code = exit_internal;
    report.error += std::string(report.error.empty() ? "" : "; ") + e.what();
  }
  return report;
}

RunReport run_command(const std::string& subcommand, const std::string& config_path,
                      const std::optional<std::string>& out_dir,
                      const std::optional<std::uint64_t>& seed, int threads, std::ostream& err) {
  std::map<std::string, std::string> overrides;
  if (out_dir) overrides["output.dir"] = *out_dir;
  if (seed) overrides["numeric.seed"] = std::to_string(*seed);
  RunReport report;
  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path, overrides, {{"operation.name", subcommand}});
    if (cfg.operation() != subcommand)
      throw ConfigError("operation.name", 0,
                        "subcommand " + subcommand + " does not match operation.name = " + cfg.operation());
  } catch (const ConfigError& e) {
    report.exit_code = exit_config;
    report.error = e.what();
    err << config_path << ": error: " << e.what() << "\n";
    return report;
  }
  report = run(cfg, threads);
  if (!report.error.empty()) err << "error: " << report.error << "\n";
  return report;
}

}  // namespace wcontract
