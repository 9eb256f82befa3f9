// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "optosq/gaussian.hpp"
#include "optosq/lindblad.hpp"
#include "optosq/meanfield.hpp"
#include "optosq/sweep.hpp"

using namespace optosq;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

// Worst values seen across every accepted run, checked together at the end.
struct PropertyLog {
  double trace_error = 0.0;
  double hermiticity = 0.0;
  double min_eigenvalue = 0.0;
  double min_heisenberg = 1.0;
  double min_margin = 1.0;
  double lyapunov_residual = 0.0;
  double meanfield_residual = 0.0;
  int me_runs = 0, cm_runs = 0, lyapunov_solves = 0;

  void me(const MasterEquationResult& r) {
    ++me_runs;
    const auto col = [&](const char* c) { return r.series.column(c); };
    for (double v : col("trace_error")) trace_error = std::max(trace_error, v);
    for (double v : col("hermiticity")) hermiticity = std::max(hermiticity, v);
    for (double v : col("min_eigenvalue")) min_eigenvalue = std::min(min_eigenvalue, v);
    const auto x = col("var_X"), y = col("var_Y");
    for (std::size_t i = 0; i < x.size(); ++i) min_heisenberg = std::min(min_heisenberg, x[i] * y[i]);
  }
  void cm(const CovarianceEvolution& e) {
    ++cm_runs;
    for (double v : e.series.column("uncertainty_product")) min_heisenberg = std::min(min_heisenberg, v);
    for (double v : e.series.column("physicality_margin")) min_margin = std::min(min_margin, v);
  }
  double lyapunov(const DriftMatrix& A, const DiffusionMatrix& D) {
    const CovarianceState V = lyapunov_steady(A, D);
    ++lyapunov_solves;
    lyapunov_residual = std::max(lyapunov_residual, optosq::lyapunov_residual(A.entries, V.V, D.matrix()));
    min_margin = std::min(min_margin, physicality_margin(V.V));
    min_heisenberg = std::min(min_heisenberg, V.V(0, 0) * V.V(1, 1));
    return V.V(0, 0);
  }
  void meanfield(const SteadyMeanField& s) { meanfield_residual = std::max(meanfield_residual, s.residual); }
};

PropertyLog props;

struct Preset {
  PhysicalParams p = reference_preset();
  SteadyMeanField s;
  DerivedParams d;
  Preset() {
    d = derive(p, &s);
    props.meanfield(s);
  }
};

const Preset& preset() {
  static const Preset instance;
  return instance;
}

double guard_of(const DensityMatrix& rho, const HilbertSpec& sp) {
  double g = 0.0;
  for (int k = 0; k < sp.modes(); ++k) g = std::max(g, top_level_population(rho.matrix(), sp, k));
  return g;
}

double x_variance(const DensityMatrix& rho, const HamiltonianSpec& h) {
  return quadrature_variance(rho, position_quadrature(mode_annihilation(h.mechanical_slot(), h.space)));
}

// Shared between criteria 1 to 3.
double g_effective_me = std::nan("");
double g_reduced_cm = std::nan("");

void criterion1(Outcome& o) {
  const auto& P = preset();
  const HamiltonianSpec h = effective_spec(P.d);
  MasterEquationOptions mo;
  mo.t_final = 500.0;
  mo.dt = default_me_dt(h);
  mo.sample_dt = 0.5;
  const auto r = evolve_master_equation(h, standard_dissipators(h), initial_state(h, 0.0), mo, mechanical_observables(h));
  props.me(r);
  const SteadyEstimate me = tail_average(r.series.column("var_X"));
  g_effective_me = me.value;
  o.check(me.converged, "effective ME tail not converged");
  o.check(r.truncation_ok, "effective ME guard population");
  o.check(me.value < 0.5, "effective ME not squeezed");

  g_reduced_cm = props.lyapunov(drift_reduced(P.d), diffusion_reduced(P.p));
  CovarianceOptions co;
  co.t_final = 2000.0;
  co.dt = 2e-3;
  co.sample_dt = 1.0;
  const auto e = evolve_covariance(static_drift(drift_reduced(P.d)), diffusion_reduced(P.p), initial_covariance(4, 0.0), co);
  props.cm(e);
  o.check(e.steady_q.converged && rel(e.steady_q.value, g_reduced_cm) < 1e-6, "reduced CM evolution vs Lyapunov");
  o.check(g_reduced_cm < 0.5, "reduced CM not squeezed");
  o.detail << "effective ME <dX^2>=" << num(me.value) << " (t=500, drift " << num(me.drift) << "), reduced CM <dq^2>="
           << num(g_reduced_cm) << " (evolved " << num(e.steady_q.value) << ")";
}

void criterion2(Outcome& o) {
  const auto& P = preset();
  const HamiltonianSpec full = full_linear_spec(P.d, HilbertSpec({4, 10, 4}));
  const DissipatorSpec diss = standard_dissipators(full);
  const DirectSteadyState ss = steady_state_direct(build_hamiltonian(full), diss);
  const double v_full = x_variance(ss.rho, full);
  const double guard = guard_of(ss.rho, full.space);
  o.check(ss.residual < 1e-9, "full ME steady residual");
  o.check(guard < 1e-4, "full ME guard population");

  // Physicality of the full model along a short transient from the vacuum.
  MasterEquationOptions mo;
  mo.t_final = 5.0;
  mo.dt = default_me_dt(full);
  mo.sample_dt = 0.25;
  props.me(evolve_master_equation(full, diss, initial_state(full, 0.0), mo, mechanical_observables(full)));

  const HamiltonianSpec eff = effective_spec(P.d);
  const DirectSteadyState se = steady_state_direct(build_hamiltonian(eff), standard_dissipators(eff));
  const double v_eff = x_variance(se.rho, eff);
  o.check(rel(v_eff, g_effective_me) < 1e-4, "effective direct solve vs evolution");
  o.check(rel(v_full, v_eff) < 0.10, "full vs effective ME beyond 10%");

  const double v6 = props.lyapunov(drift_full_steady(P.p, P.s), diffusion_full(P.p));
  CovarianceOptions co;
  co.t_final = 300.0;
  co.dt = 5e-4;
  co.sample_dt = 0.5;
  const auto e = evolve_covariance(static_drift(drift_full_steady(P.p, P.s)), diffusion_full(P.p), initial_covariance(6, 0.0), co);
  props.cm(e);
  o.check(e.steady_q.converged && rel(e.steady_q.value, v6) < 1e-5, "full CM evolution vs Lyapunov");
  o.check(rel(v6, g_reduced_cm) < 0.05, "full vs reduced CM beyond 5%");
  o.detail << "ME full(4,10,4)=" << num(v_full) << " effective=" << num(v_eff) << " rel " << num(rel(v_full, v_eff))
           << " guard " << num(guard) << "; CM 6x6=" << num(v6) << " 4x4=" << num(g_reduced_cm) << " rel "
           << num(rel(v6, g_reduced_cm));
}

void criterion3(Outcome& o) {
  const auto& P = preset();
  o.check(rel(g_effective_me, g_reduced_cm) < 0.05, "effective ME vs reduced CM beyond 5%");
  // Time-dependent drift A(t) driven by the mean field from zero amplitudes.
  CovarianceOptions co;
  co.t_final = 2000.0;
  co.dt = 5e-4;
  co.sample_dt = 1.0;
  const auto e = evolve_covariance_cointegrated(P.p, initial_covariance(6, 0.0), co);
  props.cm(e);
  o.check(e.steady_q.converged, "time-dependent CM tail not converged");
  o.check(rel(g_reduced_cm, e.steady_q.value) < 0.05, "reduced vs time-dependent CM beyond 5%");
  o.detail << "effective ME=" << num(g_effective_me) << " reduced CM=" << num(g_reduced_cm) << " rel "
           << num(rel(g_effective_me, g_reduced_cm)) << "; time-dependent 6x6 CM=" << num(e.steady_q.value) << " rel "
           << num(rel(g_reduced_cm, e.steady_q.value));
}

void criterion4(Outcome& o) {
  std::vector<double> eta, dev;
  double worst = 0.0;
  for (int k = 0; k <= 40; ++k) {
    PhysicalParams p = reference_preset();
    p.eta = 0.01 * k;
    // Analytic formula against the undamped Lyapunov solution.
    PhysicalParams p0 = p;
    p0.gamma_m = 0.0;
    const SteadyMeanField s0 = find_steady_meanfield(p0);
    props.meanfield(s0);
    const DerivedParams d0 = effective_params(p0, s0.a_s, s0.b_s);
    const double analytic = analytic_variance(d0);
    const double lyap0 = props.lyapunov(drift_reduced(d0), diffusion_reduced(p0));
    worst = std::max(worst, rel(analytic, lyap0));
    // Analytic formula against the full model at the actual damping.
    SteadyMeanField s;
    derive(p, &s);
    props.meanfield(s);
    const double full = props.lyapunov(drift_full_steady(p, s), diffusion_full(p));
    eta.push_back(p.eta);
    dev.push_back(std::abs(analytic - full));
  }
  o.check(worst < 1e-6, "analytic vs undamped Lyapunov beyond 1e-6");
  // Trend beyond eta = 0.3: least-squares slope of the deviation.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < eta.size(); ++i) {
    if (eta[i] < 0.3 - 1e-12) continue;
    sx += eta[i];
    sy += dev[i];
    sxx += eta[i] * eta[i];
    sxy += eta[i] * dev[i];
    ++n;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double d30 = dev[30], d40 = dev[40];
  o.check(slope > 0.0 && d40 > d30, "deviation does not grow beyond eta=0.3");
  o.detail << "max rel(analytic, undamped Lyapunov)=" << num(worst) << " over 41 eta; |analytic-full| at eta 0, 0.3, 0.4 = "
           << num(dev[0]) << ", " << num(d30) << ", " << num(d40) << "; slope beyond 0.3 " << num(slope);
}

void criterion5(Outcome& o) {
  const auto& P = preset();
  const double target = P.d.omega_m_tilde_prime;
  o.check(std::abs(target - 1.4) < 0.05, "omega_m_tilde' not near 1.4");
  std::vector<double> grid;
  for (int k = 0; k <= 16; ++k) grid.push_back(1.0 + 0.05 * k);
  SweepOptions so;
  so.method = SweepMethod::effective_me;
  std::vector<std::vector<SweepPoint>> curves;
  for (double n_m : {0.0, 1.0, 3.0}) {
    curves.push_back(detuning_sweep(P.d, grid, n_m, so));
    const auto& c = curves.back();
    const SweepPoint* best = nullptr;
    bool all = true;
    for (const auto& pt : c) {
      all = all && pt.converged;
      if (pt.converged && (!best || pt.variance < best->variance)) best = &pt;
    }
    o.check(all, "non-converged sweep point at n_m=" + num(n_m));
    o.check(best && std::abs(best->x - target) <= 0.1, "minimum away from omega_m_tilde' at n_m=" + num(n_m));
    o.detail << "n_m=" << num(n_m) << ": argmin " << (best ? num(best->x) : "none") << " min "
             << (best ? num(best->variance) : "none") << "; ";
  }
  bool ordered = true;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    ordered = ordered && curves[0][i].variance <= curves[1][i].variance && curves[1][i].variance <= curves[2][i].variance;
  }
  o.check(ordered, "variance not nondecreasing in n_m");
  o.detail << "omega_m_tilde'=" << num(target) << ", curves ordered in n_m: " << (ordered ? "yes" : "no");
}

void criterion6(Outcome& o) {
  DerivedParams d = preset().d;
  d.Delta_eff = 1.4;
  for (double n_m : {1.0, 2.0, 3.0}) {
    d.base.n_m = n_m;
    const HamiltonianSpec h = effective_spec(d, cooling_truncation(n_m));
    MasterEquationOptions mo;
    mo.t_final = 300.0;
    mo.dt = default_me_dt(h);
    mo.sample_dt = 0.5;
    const auto r = evolve_master_equation(h, standard_dissipators(h), initial_state(h, n_m), mo, mechanical_observables(h));
    props.me(r);
    const SteadyEstimate ph = tail_average(r.series.column("phonons"));
    o.check(ph.converged, "phonon tail not converged at n_m=" + num(n_m));
    o.check(r.truncation_ok, "guard population at n_m=" + num(n_m));
    o.check(ph.value < 1.0, "not cooled below one phonon at n_m=" + num(n_m));
    o.detail << "n_m=" << num(n_m) << " (" << h.space.dim(0) << "," << h.space.dim(1) << " levels): <b'b> " << num(r.series.column("phonons").front()) << " -> " << num(ph.value)
             << "; ";
  }
}

void criterion8(Outcome& o) {
  const std::vector<double> kappa{0.5, 1.0, 2.0, 3.0, 4.0, 6.0};
  const std::vector<double> G{2.0, 4.0, 6.0, 8.0, 10.0, 12.0};
  SweepOptions so;
  so.method = SweepMethod::reduced_cm;
  const auto pts = kappa_g_sweep(reference_preset(), kappa, G, 0.0, so);
  int squeezed_high = 0, converged = 0;
  bool preset_point = false;
  for (const auto& pt : pts) {
    converged += pt.converged ? 1 : 0;
    if (pt.converged && pt.variance < 0.5 && pt.x > 1.0) ++squeezed_high;
    if (pt.x == 3.0 && pt.y == 8.0) preset_point = pt.converged && pt.variance < 0.5;
  }
  o.check(preset_point, "preset point (3, 8) not squeezed");
  o.check(squeezed_high > 0, "no squeezed point with kappa > omega_m");
  o.detail << squeezed_high << " squeezed points with kappa > 1 on a 6x6 grid (" << converged << "/" << pts.size()
           << " solved)";
}

void criterion7(Outcome& o) {
  const auto& P = preset();
  o.check(props.trace_error < 1e-10, "trace");
  o.check(props.hermiticity < 1e-10, "hermiticity");
  o.check(props.min_eigenvalue > -1e-10, "positivity");
  o.check(props.min_heisenberg >= 0.25 - 1e-8, "Heisenberg product");
  o.check(props.min_margin >= -1e-8, "V + i Omega/2 PSD");
  o.check(props.lyapunov_residual < 1e-10, "Lyapunov residual");
  o.check(props.meanfield_residual < 1e-6, "mean-field residual");

  // Detailed balance of the free mechanical dissipator away from the cut.
  const int n = 60;
  const double n_m = 1.0, g = 0.05;
  DissipatorSpec free;
  free.channels.push_back({annihilation(n), 2.0 * g * (n_m + 1.0), "b"});
  free.channels.push_back({annihilation(n).adjoint(), 2.0 * g * n_m, "b_dag"});
  const CMatrix drho = lindblad_rhs(number(n), free, thermal_state(n, n_m));
  const double balance = drho.topLeftCorner(n - 2, n - 2).cwiseAbs().maxCoeff();
  o.check(balance < 1e-9, "detailed balance");

  // Mean-field formulations: whole trajectory without damping, and at the preset steady state.
  PhysicalParams p0 = P.p;
  p0.gamma_m = 0.0;
  const double dt = default_meanfield_dt(p0);
  const auto abc = integrate_meanfield_abc(p0, 200.0, dt, 50);
  const auto qp = integrate_meanfield_qpac(p0, 200.0, dt, 50);
  double qmax = 0.0, gap = 0.0;
  for (std::size_t i = 0; i < abc.size(); ++i) {
    qmax = std::max(qmax, std::abs(qp.samples()[i].q()));
    gap = std::max(gap, std::abs(qp.samples()[i].q() - abc.samples()[i].q()));
  }
  const SteadyMeanField sq = find_steady_meanfield(P.p, MeanFieldForm::qpac);
  const double steady_gap = rel(sq.q_s, P.s.q_s);
  o.check(gap / qmax < 1e-6 && steady_gap < 1e-6, "mean-field formulations");

  o.detail << props.me_runs << " ME runs: trace " << num(props.trace_error) << ", herm " << num(props.hermiticity)
           << ", min eig " << num(props.min_eigenvalue) << "; " << props.cm_runs << " CM runs + " << props.lyapunov_solves
           << " Lyapunov: min margin " << num(props.min_margin) << ", max residual " << num(props.lyapunov_residual)
           << "; min Heisenberg " << num(props.min_heisenberg) << "; detailed balance " << num(balance)
           << "; MF residual " << num(props.meanfield_residual) << "; MF forms " << num(gap / qmax) << " (gamma_m=0), "
           << num(steady_gap) << " (steady)";
}

}  // namespace

// Optional arguments pick a subset of criteria, e.g. `acceptance 6`.
int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  const std::vector<std::pair<int, std::function<void(Outcome&)>>> order{
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4},
      {5, criterion5}, {6, criterion6}, {8, criterion8}, {7, criterion7}};
  const char* names[] = {"",
                         "squeezing below vacuum",
                         "adiabatic elimination",
                         "ME and CM equivalence",
                         "analytic steady variance",
                         "optimal detuning",
                         "cooling below one phonon",
                         "physics properties",
                         "squeezing at high kappa"};
  int failed = 0, ran = 0;
  for (const auto& [id, fn] : order) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    ++ran;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "[exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char head[96];
    std::snprintf(head, sizeof head, "CRITERION %d %s %s (%.1fs): ", id, o.pass ? "PASS" : "FAIL", names[id], secs);
    std::printf("%s%s\n", head, o.detail.str().c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
