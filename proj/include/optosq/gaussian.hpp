#pragma once

// Covariance-matrix description of the linearised fluctuations.
//
// Quadrature ordering is fixed: full system [dq, dp, dx1, dy1, dx2, dy2]
// (mirror, cavity, atoms), reduced system [dq, dp, dx2, dy2] after the cavity
// has been eliminated. V_kl = <U_k U_l + U_l U_k>/2 and dV/dt = A V + V A^T + D.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>

#include "optosq/errors.hpp"
#include "optosq/meanfield.hpp"
#include "optosq/model.hpp"
#include "optosq/ode.hpp"
#include "optosq/timeseries.hpp"

namespace optosq {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct DriftMatrix {
  MatrixXd entries;
  std::optional<double> t;

  Eigen::Index size() const { return entries.rows(); }
};

struct DiffusionMatrix {
  VectorXd diagonal;

  MatrixXd matrix() const { return diagonal.asDiagonal(); }
  Eigen::Index size() const { return diagonal.size(); }
};

struct CovarianceState {
  MatrixXd V;
  double t = 0.0;  ///< infinity for a Lyapunov steady state

  double position_variance() const { return V(0, 0); }
  double momentum_variance() const { return V(1, 1); }
};

/// Drift of the six quadratures about the mean-field point `mf`
/// (G_x + i G_y = sqrt(2) g0 <a>, detuning delta_c - g0 <q>).
inline DriftMatrix drift_full(const PhysicalParams& p, const MeanFieldState& mf) {
  const double g0 = p.g0();
  const cplx G0t = std::sqrt(2.0) * g0 * mf.a;
  const double Gx = G0t.real(), Gy = G0t.imag();
  const double Dc = p.delta_c - g0 * mf.q();
  MatrixXd A = MatrixXd::Zero(6, 6);
  A(0, 1) = p.omega_m;
  A(1, 0) = -(p.omega_m + 4.0 * p.eta);
  A(1, 1) = -p.gamma_m;
  A(1, 2) = Gx;
  A(1, 3) = Gy;
  A(2, 0) = -Gy;
  A(2, 2) = -p.kappa;
  A(2, 3) = Dc;
  A(2, 5) = p.G;
  A(3, 0) = Gx;
  A(3, 2) = -Dc;
  A(3, 3) = -p.kappa;
  A(3, 4) = -p.G;
  A(4, 3) = p.G;
  A(4, 4) = -p.gamma_a;
  A(4, 5) = p.Delta_a;
  A(5, 2) = -p.G;
  A(5, 4) = -p.Delta_a;
  A(5, 5) = -p.gamma_a;
  return {A, mf.t};
}

/// Full drift with the mean fields replaced by their steady magnitudes
/// (<a> -> |<a>_s| real, <q> -> |<q>_s|).
inline DriftMatrix drift_full_steady(const PhysicalParams& p, const SteadyMeanField& s) {
  MeanFieldState approx;
  approx.a = cplx(s.a_s, 0.0);
  approx.b = cplx(s.q_s / std::sqrt(2.0), 0.0);
  DriftMatrix d = drift_full(p, approx);
  d.t.reset();
  return d;
}

/// Drift of [dq, dp, dx2, dy2] after adiabatic elimination of the cavity.
inline DriftMatrix drift_reduced(const DerivedParams& d) {
  const PhysicalParams& p = d.base;
  MatrixXd B = MatrixXd::Zero(4, 4);
  B(0, 1) = p.omega_m;
  B(1, 0) = -d.Omega_m;
  B(1, 1) = -p.gamma_m;
  B(1, 2) = -d.G_g;
  B(2, 2) = -p.gamma_a;
  B(2, 3) = d.Delta_G;
  B(3, 0) = -d.G_g;
  B(3, 2) = -d.Delta_G;
  B(3, 3) = -p.gamma_a;
  return {B, std::nullopt};
}

inline DriftMatrix drift_reduced(const PhysicalParams& p, const SteadyMeanField& s) {
  return drift_reduced(effective_params(p, s.a_s, s.b_s));
}

/// Gaussian image of the effective two-mode master equation
/// (H = w~ b'b + D_eff c'c + G_eff (b+b')(c+c') + eta'(b^2+b'^2), amplitude
/// damping gamma_m on b and gamma_eff on c), ordering [dq, dp, dx2, dy2].
inline DriftMatrix drift_effective(const DerivedParams& d) {
  const PhysicalParams& p = d.base;
  MatrixXd A = MatrixXd::Zero(4, 4);
  A(0, 0) = -p.gamma_m;
  A(0, 1) = d.omega_m_tilde - 2.0 * d.eta_prime;
  A(1, 0) = -(d.omega_m_tilde + 2.0 * d.eta_prime);
  A(1, 1) = -p.gamma_m;
  A(1, 2) = -2.0 * d.G_eff;
  A(2, 2) = -d.gamma_eff;
  A(2, 3) = d.Delta_eff;
  A(3, 0) = -2.0 * d.G_eff;
  A(3, 2) = -d.Delta_eff;
  A(3, 3) = -d.gamma_eff;
  return {A, std::nullopt};
}

inline DiffusionMatrix diffusion_full(const PhysicalParams& p) {
  VectorXd v(6);
  v << 0.0, p.gamma_m * (2.0 * p.n_m + 1.0), p.kappa, p.kappa, p.gamma_a, p.gamma_a;
  return {v};
}

inline DiffusionMatrix diffusion_reduced(const PhysicalParams& p) {
  VectorXd v(4);
  v << 0.0, p.gamma_m * (2.0 * p.n_m + 1.0), p.gamma_a, p.gamma_a;
  return {v};
}

/// Noise of drift_effective: thermal RWA damping on b, vacuum on c.
inline DiffusionMatrix diffusion_effective(const DerivedParams& d) {
  const PhysicalParams& p = d.base;
  const double th = p.gamma_m * (2.0 * p.n_m + 1.0);
  VectorXd v(4);
  v << th, th, d.gamma_eff, d.gamma_eff;
  return {v};
}

/// Mirror thermal at n_m, every other mode in vacuum.
inline CovarianceState initial_covariance(Eigen::Index size, double n_m) {
  VectorXd v = VectorXd::Constant(size, 0.5);
  v(0) = v(1) = n_m + 0.5;
  return {v.asDiagonal(), 0.0};
}

/// Block-diagonal symplectic form with [[0, 1], [-1, 0]] per mode.
inline MatrixXd symplectic_form(Eigen::Index size) {
  MatrixXd omega = MatrixXd::Zero(size, size);
  for (Eigen::Index k = 0; k + 1 < size; k += 2) {
    omega(k, k + 1) = 1.0;
    omega(k + 1, k) = -1.0;
  }
  return omega;
}

/// Smallest eigenvalue of V + i Omega/2; nonnegative for a physical state.
inline double physicality_margin(const MatrixXd& V) {
  const Eigen::MatrixXcd M = V.cast<cplx>() + cplx(0.0, 0.5) * symplectic_form(V.rows()).cast<cplx>();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(M, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline double asymmetry(const MatrixXd& V) { return (V - V.transpose()).cwiseAbs().maxCoeff(); }

struct StabilityReport {
  Eigen::VectorXcd eigenvalues;
  double max_real_part = 0.0;
  bool hurwitz = false;
};

inline StabilityReport stability_report(const MatrixXd& A) {
  if (A.rows() != A.cols()) throw InvalidDimensionError("stability_report: matrix is not square");
  StabilityReport r;
  Eigen::EigenSolver<MatrixXd> es(A, false);
  r.eigenvalues = es.eigenvalues();
  r.max_real_part = r.eigenvalues.real().maxCoeff();
  r.hurwitz = r.max_real_part < 0.0;
  return r;
}

inline StabilityReport stability_report(const DriftMatrix& A) { return stability_report(A.entries); }

inline double lyapunov_residual(const MatrixXd& B, const MatrixXd& V, const MatrixXd& D) {
  return (B * V + V * B.transpose() + D).cwiseAbs().maxCoeff();
}

/// Solves B V + V B^T = -D by vectorisation: (I (x) B + B (x) I) vec V = -vec D.
inline CovarianceState lyapunov_steady(const DriftMatrix& B, const DiffusionMatrix& D,
                                       double residual_tolerance = 1e-10) {
  const Eigen::Index n = B.size();
  if (B.entries.cols() != n || D.size() != n) throw InvalidDimensionError("lyapunov_steady: shape mismatch");
  const StabilityReport st = stability_report(B.entries);
  if (!st.hurwitz) {
    throw StabilityError("lyapunov_steady: drift not Hurwitz (max Re lambda = " + std::to_string(st.max_real_part) +
                         ")");
  }
  const MatrixXd I = MatrixXd::Identity(n, n);
  MatrixXd K = MatrixXd::Zero(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      // (I (x) B) block (i, j) = I_ij B ; (B (x) I) block (i, j) = B_ij I
      K.block(i * n, j * n, n, n) += I(i, j) * B.entries + B.entries(i, j) * I;
    }
  }
  const MatrixXd Dm = D.matrix();
  const VectorXd rhs = -Eigen::Map<const VectorXd>(Dm.data(), n * n);
  Eigen::FullPivLU<MatrixXd> lu(K);
  if (!lu.isInvertible()) throw DegenerateError("lyapunov_steady: singular Kronecker system");
  VectorXd x = lu.solve(rhs);
  x += lu.solve(rhs - K * x);  // one refinement sweep
  MatrixXd V = Eigen::Map<MatrixXd>(x.data(), n, n);
  V = 0.5 * (V + V.transpose());
  const double res = lyapunov_residual(B.entries, V, Dm);
  if (!(res < residual_tolerance)) {
    throw DegenerateError("lyapunov_steady: residual " + std::to_string(res) + " above tolerance");
  }
  return {V, std::numeric_limits<double>::infinity()};
}

/// Closed-form steady <dq^2> of the reduced system for gamma_m = 0.
inline double analytic_variance(double omega_m, double Delta_G, double gamma_a, double Omega_m, double G_g) {
  if (Delta_G == 0.0) throw SingularParameterError("analytic_variance: Delta_G = 0");
  const double s = Delta_G * Delta_G + gamma_a * gamma_a;
  const double den = Omega_m * s - G_g * G_g * Delta_G;
  if (den == 0.0) throw SingularParameterError("analytic_variance: vanishing denominator");
  return (omega_m + s * s / den) / (4.0 * Delta_G);
}

inline double analytic_variance(const DerivedParams& d) {
  return analytic_variance(d.base.omega_m, d.Delta_G, d.base.gamma_a, d.Omega_m, d.G_g);
}

/// Drift as a function of time; static drifts ignore the argument.
using DriftSource = std::function<MatrixXd(double)>;

inline DriftSource static_drift(const DriftMatrix& A) {
  return [m = A.entries](double) { return m; };
}

/// A(t) from the mean-field trajectory by piecewise-linear interpolation.
inline DriftSource trajectory_drift(const PhysicalParams& p, std::shared_ptr<const MeanFieldTrajectory> traj) {
  return [p, traj = std::move(traj)](double t) { return drift_full(p, traj->at(t)).entries; };
}

struct CovarianceOptions {
  double t_final = 100.0;
  double dt = 0.01;
  double sample_dt = 0.1;
  double physicality_tolerance = -1e-8;
  double symmetry_tolerance = 1e-12;
};

struct CovarianceEvolution {
  TimeSeries series;  ///< V11, V22, V11*V22, physicality margin
  CovarianceState final_state;
  SteadyEstimate steady_q;  ///< tail average of V11
};

inline CovarianceEvolution evolve_covariance(const DriftSource& drift, const DiffusionMatrix& D,
                                             const CovarianceState& V0, const CovarianceOptions& opt) {
  const Eigen::Index n = V0.V.rows();
  if (V0.V.cols() != n || D.size() != n) throw InvalidDimensionError("evolve_covariance: shape mismatch");
  if (!(opt.t_final > V0.t) || !(opt.dt > 0.0)) throw DomainError("evolve_covariance: bad time grid");
  const MatrixXd Dm = D.matrix();
  const long steps = step_count(opt.t_final - V0.t, opt.dt);
  const double h = (opt.t_final - V0.t) / static_cast<double>(steps);
  const long stride = std::max(1L, static_cast<long>(std::llround(opt.sample_dt / h)));

  CovarianceEvolution out{TimeSeries({"V11", "V22", "uncertainty_product", "physicality_margin"}), V0, {}};
  MatrixXd V = V0.V;
  auto record = [&](double t) {
    const double margin = physicality_margin(V);
    if (margin < opt.physicality_tolerance) {
      throw PhysicalityError("evolve_covariance: V + i Omega/2 not PSD at t=" + std::to_string(t) + " (margin " +
                             std::to_string(margin) + ")");
    }
    if (asymmetry(V) > opt.symmetry_tolerance) throw PhysicalityError("evolve_covariance: V lost symmetry");
    out.series.append(t, {V(0, 0), V(1, 1), V(0, 0) * V(1, 1), margin});
  };
  record(V0.t);

  Rk4<MatrixXd> rk;
  auto rhs = [&](double t, const MatrixXd& X, MatrixXd& dX) {
    const MatrixXd A = drift(t);
    dX.noalias() = A * X;
    dX += X * A.transpose();
    dX += Dm;
  };
  for (long k = 1; k <= steps; ++k) {
    const double t = V0.t + static_cast<double>(k - 1) * h;
    rk.step(rhs, t, V, h);
    V = 0.5 * (V + V.transpose()).eval();
    if (!V.allFinite()) throw InstabilityError("evolve_covariance: covariance diverged", t + h);
    if (k % stride == 0 || k == steps) record(V0.t + static_cast<double>(k) * h);
  }
  out.final_state = {V, opt.t_final};
  const std::vector<double> v11 = out.series.column("V11");
  out.steady_q = tail_average(v11);
  return out;
}

/// Mean field (q, p, a, c form) and covariance integrated together as one
/// ODE system: a cross-check of the interpolated-trajectory route.
inline CovarianceEvolution evolve_covariance_cointegrated(const PhysicalParams& p, const CovarianceState& V0,
                                                          const CovarianceOptions& opt) {
  const MatrixXd Dm = diffusion_full(p).matrix();
  const long steps = step_count(opt.t_final - V0.t, opt.dt);
  const double h = (opt.t_final - V0.t) / static_cast<double>(steps);
  const long stride = std::max(1L, static_cast<long>(std::llround(opt.sample_dt / h)));

  // state: q, p, Re a, Im a, Re c, Im c, then V column-major
  VectorXd y = VectorXd::Zero(6 + 36);
  Eigen::Map<MatrixXd>(y.data() + 6, 6, 6) = V0.V;
  CovarianceEvolution out{TimeSeries({"V11", "V22", "uncertainty_product", "physicality_margin"}), V0, {}};
  auto record = [&](double t) {
    const MatrixXd V = Eigen::Map<const MatrixXd>(y.data() + 6, 6, 6);
    const double margin = physicality_margin(V);
    if (margin < opt.physicality_tolerance) throw PhysicalityError("evolve_covariance_cointegrated: unphysical V");
    out.series.append(t, {V(0, 0), V(1, 1), V(0, 0) * V(1, 1), margin});
  };
  record(V0.t);
  Rk4<VectorXd> rk;
  auto rhs = [&](double t, const VectorXd& x, VectorXd& dx) {
    QpacVector mf(x(0), x(1), cplx(x(2), x(3)), cplx(x(4), x(5)));
    const QpacVector dmf = meanfield_qpac_rhs(p, mf);
    dx.resize(x.size());
    dx(0) = dmf(0).real();
    dx(1) = dmf(1).real();
    dx(2) = dmf(2).real();
    dx(3) = dmf(2).imag();
    dx(4) = dmf(3).real();
    dx(5) = dmf(3).imag();
    const MatrixXd A = drift_full(p, MeanFieldState::from_qp(t, x(0), x(1), mf(2), mf(3))).entries;
    const Eigen::Map<const MatrixXd> V(x.data() + 6, 6, 6);
    Eigen::Map<MatrixXd> dV(dx.data() + 6, 6, 6);
    dV = A * V + V * A.transpose() + Dm;
  };
  for (long k = 1; k <= steps; ++k) {
    rk.step(rhs, V0.t + static_cast<double>(k - 1) * h, y, h);
    Eigen::Map<MatrixXd> V(y.data() + 6, 6, 6);
    V = 0.5 * (V + V.transpose()).eval();
    if (!y.allFinite()) throw InstabilityError("evolve_covariance_cointegrated: diverged", V0.t + k * h);
    if (k % stride == 0 || k == steps) record(V0.t + static_cast<double>(k) * h);
  }
  out.final_state = {Eigen::Map<const MatrixXd>(y.data() + 6, 6, 6), opt.t_final};
  out.steady_q = tail_average(out.series.column("V11"));
  return out;
}

}  // namespace optosq
