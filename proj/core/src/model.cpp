#include "wcontract/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace wcontract {

namespace {

Mat sym_sqrt(const Mat& S, bool inverse) {
  Eigen::SelfAdjointEigenSolver<Mat> es(S);
  Vec ev = es.eigenvalues();
  for (int i = 0; i < ev.size(); ++i) {
    double v = std::max(ev[i], 0.0);
    ev[i] = inverse ? 1.0 / std::sqrt(v) : std::sqrt(v);
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double spectral_norm(const Mat& A) {
  if (A.size() == 0) return 0;
  Eigen::JacobiSVD<Mat> svd(A);
  return svd.singularValues()(0);
}

double min_singular(const Mat& A) {
  Eigen::JacobiSVD<Mat> svd(A);
  return svd.singularValues().tail(1)(0);
}

struct Scan {
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
  bool constant = true;
};

//! Range of a scalar function on [-radius, radius] at step 1e-3.
Scan scan(const ScalarExpr& f, double radius) {
  Scan s;
  const int n = static_cast<int>(std::lround(2 * radius / 1e-3));
  double first = f(-radius);
  for (int i = 0; i <= n; ++i) {
    double v = f(-radius + i * (2 * radius / n));
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
    if (v != first) s.constant = false;
  }
  return s;
}

void require_positive(double v, const char* what) {
  if (!(v > 0)) throw ModelError(std::string(what) + " must be positive");
}

}  // namespace

//---------------------------------------------------------------------------//

double MetricChange::norm_Q() const { return spectral_norm(Q); }

double MetricChange::norm_Q_inv() const {
  return spectral_norm(Q_inv_half * Q_inv_half);
}

double MetricChange::norm_Q_inv_half() const { return spectral_norm(Q_inv_half); }

double MetricChange::norm_Q22(int m) const {
  const int d = static_cast<int>(Q.rows());
  return spectral_norm(Q.block(d - m, d - m, m, m));
}

MetricChange make_metric(const Mat& Q, double rho2, double S_star) {
  if (Q.rows() != Q.cols() || Q.rows() == 0) throw ModelError("Q must be square");
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, Q.cwiseAbs().maxCoeff()))
    throw ModelError("Q must be symmetric");
  require_positive(rho2, "rho2");
  require_positive(S_star, "S*");
  Eigen::SelfAdjointEigenSolver<Mat> es(Q);
  if (es.eigenvalues()(0) < 1e-12) throw ModelError("Q must be positive definite (min eigenvalue < 1e-12)");
  MetricChange mc;
  mc.Q = Q;
  mc.Q_half = sym_sqrt(Q, false);
  mc.Q_inv_half = sym_sqrt(Q, true);
  mc.rho2 = rho2;
  mc.S_star = S_star;
  return mc;
}

StateDecomposition make_decomposition(const Mat& sigma, int n, int m, double rho1, double L1,
                                      double L2, double L3, double theta) {
  if (n < 0 || m <= 0 || sigma.rows() != n + m) throw ModelError("decomposition block sizes do not match sigma");
  require_positive(rho1, "rho1");
  require_positive(L1, "L1");
  require_positive(L2, "L2");
  require_positive(L3, "L3");
  require_positive(theta, "theta");
  Mat Sigma = sigma * sigma.transpose();
  Sigma.block(n, n, m, m) -= theta * theta * Mat::Identity(m, m);
  Eigen::SelfAdjointEigenSolver<Mat> es(Sigma);
  double tol = 1e-12 * std::max(1.0, Sigma.cwiseAbs().maxCoeff());
  if (es.eigenvalues()(0) < -tol)
    throw ModelError("sigma sigma^T - theta^2 blockdiag(0, I) is not positive semidefinite");
  StateDecomposition sd;
  sd.n = n;
  sd.m = m;
  sd.rho1 = rho1;
  sd.L1 = L1;
  sd.L2 = L2;
  sd.L3 = L3;
  sd.theta = theta;
  sd.sigma_tilde = sym_sqrt(Sigma, false);
  return sd;
}

//---------------------------------------------------------------------------//

Vec DriftModel::b(const Vec& x) const {
  Vec out(dim);
  drift(x.data(), out.data());
  return out;
}

Mat DriftModel::grad_b(const Vec& x) const {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> J(dim, dim);
  jacobian(x.data(), J.data());
  return J;
}

double DriftModel::eta_at(const Vec& x) const { return eta(x.data()); }

double max_sym_eigenvalue(const Mat& J) {
  if (J.rows() == 1) return J(0, 0);
  if (J.rows() == 2) {
    double a = J(0, 0), c = J(1, 1), b = 0.5 * (J(0, 1) + J(1, 0));
    return 0.5 * (a + c) + std::sqrt(0.25 * (a - c) * (a - c) + b * b);
  }
  Mat S = 0.5 * (J + J.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(S.rows() - 1);
}

std::function<double(const double*)> weighted_eta(const DriftModel& model, const Mat& Q) {
  MetricChange mc = make_metric(Q, 1, 1);
  auto jac = model.jacobian;
  const int d = model.dim;
  return [jac, d, Qh = mc.Q_half, Qih = mc.Q_inv_half](const double* x) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> J(d, d);
    jac(x, J.data());
    Mat W = Qh * J * Qih;
    return max_sym_eigenvalue(W);
  };
}

DriftModel linear_change(const DriftModel& model, const Mat& T) {
  const int d = model.dim;
  if (T.rows() != d || T.cols() != d) throw ModelError("change of variables has the wrong size");
  Eigen::FullPivLU<Mat> lu(T);
  if (!lu.isInvertible()) throw ModelError("change of variables is singular");
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMat Tr = T;
  RowMat Tinv = lu.inverse();
  DriftModel out;
  out.kind = model.kind + "+linear_change";
  out.dim = d;
  out.sigma = T * model.sigma;
  auto drift = model.drift;
  auto jac = model.jacobian;
  // Small states use stack buffers; the coupling simulator calls these in its inner loop.
  out.drift = [drift, Tr, Tinv, d](const double* xt, double* o) {
    constexpr int kMax = 16;
    double xs[kMax], bs[kMax];
    std::vector<double> heap;
    double* x = xs;
    double* bx = bs;
    if (d > kMax) {
      heap.resize(2 * d);
      x = heap.data();
      bx = heap.data() + d;
    }
    for (int i = 0; i < d; ++i) {
      double acc = 0;
      for (int j = 0; j < d; ++j) acc += Tinv(i, j) * xt[j];
      x[i] = acc;
    }
    drift(x, bx);
    for (int i = 0; i < d; ++i) {
      double acc = 0;
      for (int j = 0; j < d; ++j) acc += Tr(i, j) * bx[j];
      o[i] = acc;
    }
  };
  out.jacobian = [jac, Tr, Tinv, d](const double* xt, double* o) {
    Vec x = Tinv * Eigen::Map<const Vec>(xt, d);
    RowMat J(d, d);
    jac(x.data(), J.data());
    Eigen::Map<RowMat>(o, d, d) = Tr * J * Tinv;
  };
  auto new_jac = out.jacobian;
  out.eta = [new_jac, d](const double* x) {
    RowMat J(d, d);
    new_jac(x, J.data());
    return max_sym_eigenvalue(J);
  };
  return out;
}

//---------------------------------------------------------------------------//
// Builtin models
//---------------------------------------------------------------------------//

DriftModel overdamped1d(const ScalarExpr& U, double theta) {
  require_positive(theta, "theta");
  ScalarExpr dU = differentiate(U);
  ScalarExpr d2U = differentiate(dU);
  DriftModel m;
  m.kind = "overdamped1d";
  m.dim = 1;
  m.sigma = Mat::Constant(1, 1, std::sqrt(2.0) * theta);
  m.drift = [dU](const double* x, double* o) { o[0] = -dU(x[0]); };
  m.jacobian = [d2U](const double* x, double* o) { o[0] = -d2U(x[0]); };
  m.eta = [d2U](const double* x) { return -d2U(x[0]); };
  m.scalar = [dU, d2U](double x, double& b, double& db, double& eta) {
    b = -dU(x);
    db = -d2U(x);
    eta = db;
  };
  Scan s = scan(d2U, 10);
  m.lipschitz = -s.min;
  if (s.constant) m.lambda_star = s.min;
  return m;
}

ScalarExpr builtin_potential(const std::string& name) {
  if (name == "U0") return parse_expression("x^2");
  if (name == "U1") return parse_expression("x^2 + 2*exp(-x^2)");
  if (name == "U2") return parse_expression("x^2 + 2*exp(-x^2) + a*cos(10*x)", {{"a", 0.25}});
  throw ModelError("unknown builtin potential '" + name + "'");
}

DriftModel overdamped_builtin(const std::string& name, double theta) {
  DriftModel m = overdamped1d(builtin_potential(name), theta);
  double a = 0;
  if (name == "U0") {
    m.kind = "overdamped1d:U0";
    m.scalar = [](double x, double& b, double& db, double& eta) {
      b = -2 * x;
      db = -2;
      eta = -2;
    };
    m.drift = [](const double* x, double* o) { o[0] = -2 * x[0]; };
    m.jacobian = [](const double*, double* o) { o[0] = -2; };
    m.eta = [](const double*) { return -2.0; };
    return m;
  }
  if (name == "U2") a = 0.25;
  m.kind = "overdamped1d:" + name;
  // U = x^2 + 2 e^{-x^2} + a cos(10x)
  m.scalar = [a](double x, double& b, double& db, double& eta) {
    double g = std::exp(-x * x);
    double s = 0, c = 0;
    if (a != 0) {
      s = std::sin(10 * x);
      c = std::cos(10 * x);
    }
    b = -2 * x + 4 * x * g + 10 * a * s;
    db = -2 - (8 * x * x - 4) * g + 100 * a * c;
    eta = db;
  };
  auto scalar = m.scalar;
  m.drift = [scalar](const double* x, double* o) {
    double db, eta;
    scalar(x[0], o[0], db, eta);
  };
  m.jacobian = [scalar](const double* x, double* o) {
    double b, eta;
    scalar(x[0], b, o[0], eta);
  };
  m.eta = [scalar](const double* x) {
    double b, db, eta;
    scalar(x[0], b, db, eta);
    return eta;
  };
  return m;
}

DriftModel ornstein_uhlenbeck(double rate, int d, double theta) {
  require_positive(rate, "rate");
  require_positive(theta, "theta");
  if (d <= 0) throw ModelError("dimension must be positive");
  DriftModel m;
  m.kind = "ornstein_uhlenbeck";
  m.dim = d;
  m.sigma = std::sqrt(2.0) * theta * Mat::Identity(d, d);
  m.drift = [rate, d](const double* x, double* o) {
    for (int i = 0; i < d; ++i) o[i] = -rate * x[i];
  };
  m.jacobian = [rate, d](const double*, double* o) {
    for (int i = 0; i < d * d; ++i) o[i] = 0;
    for (int i = 0; i < d; ++i) o[i * d + i] = -rate;
  };
  m.eta = [rate](const double*) { return -rate; };
  if (d == 1) {
    m.scalar = [rate](double x, double& b, double& db, double& eta) {
      b = -rate * x;
      db = -rate;
      eta = -rate;
    };
  }
  m.lipschitz = -rate;
  m.lambda_star = rate;
  return m;
}

DriftModel kinetic_langevin(const ScalarExpr& V, double gamma, double theta, int d) {
  require_positive(gamma, "gamma");
  require_positive(theta, "theta");
  if (d <= 0) throw ModelError("dimension must be positive");
  ScalarExpr dV = differentiate(V);
  ScalarExpr d2V = differentiate(dV);
  DriftModel m;
  m.kind = "kinetic_langevin";
  m.dim = 2 * d;
  m.sigma = Mat::Zero(2 * d, d);
  m.sigma.bottomRows(d) = std::sqrt(2.0) * theta * Mat::Identity(d, d);
  m.drift = [dV, gamma, d](const double* x, double* o) {
    for (int i = 0; i < d; ++i) {
      o[i] = x[d + i];
      o[d + i] = -dV(x[i]) - gamma * x[d + i];
    }
  };
  m.jacobian = [d2V, gamma, d](const double* x, double* o) {
    const int n = 2 * d;
    for (int i = 0; i < n * n; ++i) o[i] = 0;
    for (int i = 0; i < d; ++i) {
      o[i * n + d + i] = 1;
      o[(d + i) * n + i] = -d2V(x[i]);
      o[(d + i) * n + d + i] = -gamma;
    }
  };
  // sym(grad b) splits into 2x2 blocks [[0, (1-V'')/2], [(1-V'')/2, -gamma]].
  m.eta = [d2V, gamma, d](const double* x) {
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < d; ++i) {
      double c = 0.5 * (1 - d2V(x[i]));
      best = std::max(best, 0.5 * (-gamma + std::sqrt(gamma * gamma + 4 * c * c)));
    }
    return best;
  };
  Scan s = scan(d2V, 10);
  double cmax = 0.5 * std::max(std::fabs(1 - s.min), std::fabs(1 - s.max));
  m.lipschitz = 0.5 * (-gamma + std::sqrt(gamma * gamma + 4 * cmax * cmax));
  return m;
}

DriftModel linear_model(const Mat& A, const Mat& sigma) {
  if (A.rows() != A.cols() || sigma.rows() != A.rows()) throw ModelError("linear model matrices have mismatched sizes");
  const int d = static_cast<int>(A.rows());
  DriftModel m;
  m.kind = "linear";
  m.dim = d;
  m.sigma = sigma;
  m.drift = [A, d](const double* x, double* o) {
    Eigen::Map<Vec>(o, d) = A * Eigen::Map<const Vec>(x, d);
  };
  m.jacobian = [A, d](const double*, double* o) {
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) o[i * d + j] = A(i, j);
  };
  double eta = max_sym_eigenvalue(A);
  m.eta = [eta](const double*) { return eta; };
  if (d == 1) {
    double a = A(0, 0);
    m.scalar = [a](double x, double& b, double& db, double& e) {
      b = a * x;
      db = a;
      e = a;
    };
  }
  m.lipschitz = eta;
  m.lambda_star = -eta;
  return m;
}

Mat lyapunov_solve(const Mat& B) {
  const int d = static_cast<int>(B.rows());
  Mat I = Mat::Identity(d, d);
  Mat K = Mat::Zero(d * d, d * d);
  // vec(B^T Q) = (I kron B^T) vec Q, vec(Q B) = (B^T kron I) vec Q
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      K.block(i * d, j * d, d, d) += I(i, j) * B.transpose();
      K.block(i * d, j * d, d, d) += B(j, i) * I;
    }
  Vec rhs = -Eigen::Map<const Vec>(I.data(), d * d);
  Vec q = K.fullPivLu().solve(rhs);
  Mat Q = Eigen::Map<Mat>(q.data(), d, d);
  return 0.5 * (Q + Q.transpose());
}

ColoredNoiseModel colored_noise(const ScalarExpr& V, const Mat& A, const Mat& sigma0,
                                const ColoredNoiseOptions& opts) {
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(A.cols());
  if (n == 0 || m == 0) throw ModelError("A must be non-empty");
  if (sigma0.rows() != m || sigma0.cols() != m) throw ModelError("sigma0 must be m x m");
  double smin_At = min_singular(A.transpose());
  if (n > m || smin_At < 1e-12) throw ModelError("A must be surjective");
  double theta = min_singular(sigma0);
  if (theta < 1e-12) throw ModelError("sigma0 must be non-singular");

  ScalarExpr dV = differentiate(V);
  ScalarExpr d2V = differentiate(dV);
  const int d = n + m;

  ColoredNoiseModel cm;
  DriftModel& qw = cm.qw;
  qw.kind = "colored_noise";
  qw.dim = d;
  qw.sigma = Mat::Zero(d, m);
  qw.sigma.bottomRows(m) = sigma0;
  qw.drift = [dV, A, n, m](const double* x, double* o) {
    for (int i = 0; i < n; ++i) {
      double aw = 0;
      for (int j = 0; j < m; ++j) aw += A(i, j) * x[n + j];
      o[i] = -dV(x[i]) + aw;
    }
    for (int j = 0; j < m; ++j) o[n + j] = -x[n + j];
  };
  qw.jacobian = [d2V, A, n, m, d](const double* x, double* o) {
    for (int i = 0; i < d * d; ++i) o[i] = 0;
    for (int i = 0; i < n; ++i) {
      o[i * d + i] = -d2V(x[i]);
      for (int j = 0; j < m; ++j) o[i * d + n + j] = A(i, j);
    }
    for (int j = 0; j < m; ++j) o[(n + j) * d + n + j] = -1;
  };
  auto jac = qw.jacobian;
  qw.eta = [jac, d](const double* x) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> J(d, d);
    jac(x, J.data());
    return max_sym_eigenvalue(J);
  };

  Scan s = scan(d2V, opts.scan_radius);
  cm.curvature_L = -s.min;
  cm.hessian_lip = std::max(std::fabs(s.min), std::fabs(s.max));
  cm.constant_hessian = s.constant;

  double sm2 = smin_At * smin_At;
  cm.eta_cv = opts.eta_cv > 0 ? opts.eta_cv : 2 * std::max(cm.curvature_L, 1.0) / sm2;
  const double ecv = cm.eta_cv;

  cm.T = Mat::Identity(d, d);
  cm.T.block(n, 0, m, n) = ecv * A.transpose();
  cm.yz = linear_change(qw, cm.T);
  cm.yz.kind = "colored_noise:yz";

  double rho1 = ecv * sm2 - cm.curvature_L;
  if (!(rho1 > 0)) throw ModelError("eta_cv too small: rho1 = eta_cv sigma_min(A^T)^2 - L <= 0");
  Mat G = ecv * A.transpose() * A - Mat::Identity(m, m);
  double normA = spectral_norm(A);
  double L1 = normA;
  double L2 = ecv * normA * cm.hessian_lip + ecv * spectral_norm(G) * normA;
  double L3 = std::max(max_sym_eigenvalue(G), 1e-8);
  cm.yz.decomposition = make_decomposition(cm.yz.sigma, n, m, rho1, L1, std::max(L2, 1e-8), L3, theta);

  if (cm.constant_hessian) {
    Vec x0 = Vec::Zero(d);
    Mat B = cm.yz.grad_b(x0);
    // V' is affine, so the transformed drift is B x + b(0); skip the expression tree
    std::vector<double> Bv(d * d), b0(d);
    Vec c0 = cm.yz.b(x0);
    for (int i = 0; i < d; ++i) {
      b0[i] = c0[i];
      for (int j = 0; j < d; ++j) Bv[i * d + j] = B(i, j);
    }
    cm.yz.drift = [Bv, b0, d](const double* x, double* o) {
      for (int i = 0; i < d; ++i) {
        double acc = b0[i];
        for (int j = 0; j < d; ++j) acc += Bv[i * d + j] * x[j];
        o[i] = acc;
      }
    };
    cm.yz.jacobian = [Bv](const double*, double* o) { std::copy(Bv.begin(), Bv.end(), o); };
    Eigen::EigenSolver<Mat> es(B);
    if (es.eigenvalues().real().maxCoeff() < 0) {
      Mat Q = lyapunov_solve(B);
      Eigen::SelfAdjointEigenSolver<Mat> qs(Q);
      cm.yz.metric = make_metric(Q, 1.0 / (2 * qs.eigenvalues()(d - 1)), 1.0);
    }
  }
  return cm;
}

}  // namespace wcontract
