#pragma once

// Steady-variance sweeps over the effective detuning or the (kappa, G) plane.
//
// Each grid point is independent; points are farmed out to worker threads and
// written back by index, so the output order never depends on scheduling.

#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "optosq/errors.hpp"
#include "optosq/gaussian.hpp"
#include "optosq/lindblad.hpp"
#include "optosq/meanfield.hpp"
#include "optosq/model.hpp"

namespace optosq {

/// Calls f(i) for i in [0, n) on up to `threads` workers.
template <class F>
void parallel_for(std::size_t n, int threads, F&& f) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < n; i = next++) f(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

enum class SweepMethod {
  effective_me,        ///< direct steady state of the effective master equation
  effective_gaussian,  ///< Lyapunov solution for the Gaussian image of the effective model
  reduced_cm,          ///< Lyapunov solution of the reduced covariance equations
};

inline const char* to_string(SweepMethod m) {
  switch (m) {
    case SweepMethod::effective_me:
      return "effective_me";
    case SweepMethod::effective_gaussian:
      return "effective_gaussian";
    case SweepMethod::reduced_cm:
      return "reduced_cm";
  }
  return "?";
}

struct SweepOptions {
  SweepMethod method = SweepMethod::effective_me;
  HilbertSpec space = HilbertSpec({14, 8});
  int threads = 1;
  double residual_tolerance = 1e-9;
  double guard_population = 1e-4;
  SteadySearchOptions meanfield{};
};

struct SweepPoint {
  double x = std::nan("");  ///< Delta_eff, or kappa
  double y = std::nan("");  ///< unused, or G
  double n_m = 0.0;
  double variance = std::nan("");
  double phonons = std::nan("");
  bool stable = false;
  bool converged = false;
  std::string note;
};

namespace detail {

inline void steady_effective_point(const DerivedParams& d, const SweepOptions& opt, SweepPoint& out) {
  const StabilityReport st = stability_report(drift_effective(d));
  out.stable = st.hurwitz;
  if (!st.hurwitz) {
    out.note = "unstable: max Re lambda = " + std::to_string(st.max_real_part);
    return;
  }
  if (opt.method == SweepMethod::effective_gaussian) {
    const CovarianceState V = lyapunov_steady(drift_effective(d), diffusion_effective(d));
    out.variance = V.V(0, 0);
    out.phonons = 0.5 * (V.V(0, 0) + V.V(1, 1) - 1.0);
    out.converged = true;
    return;
  }
  const HamiltonianSpec h = effective_spec(d, opt.space);
  const DirectSteadyState ss = steady_state_direct(build_hamiltonian(h), standard_dissipators(h));
  const QOperator b = mode_annihilation(h.mechanical_slot(), h.space);
  out.variance = quadrature_variance(ss.rho, position_quadrature(b));
  out.phonons = expectation(b.adjoint() * b, ss.rho).real();
  double guard = 0.0;
  for (int k = 0; k < h.space.modes(); ++k) guard = std::max(guard, top_level_population(ss.rho.matrix(), h.space, k));
  out.converged = ss.residual < opt.residual_tolerance && guard < opt.guard_population;
  if (!out.converged) {
    out.note = "residual " + std::to_string(ss.residual) + ", guard population " + std::to_string(guard);
  }
}

}  // namespace detail

/// Steady <dX^2> with Delta_eff overridden at each grid value; the other
/// effective parameters stay at `base`.
inline std::vector<SweepPoint> detuning_sweep(const DerivedParams& base, const std::vector<double>& Delta_eff,
                                              double n_m, const SweepOptions& opt = {}) {
  if (opt.method == SweepMethod::reduced_cm) {
    throw DomainError("detuning_sweep: the reduced covariance model has no free Delta_eff");
  }
  if (!(n_m >= 0.0)) throw DomainError("detuning_sweep: negative thermal occupation");
  std::vector<SweepPoint> out(Delta_eff.size());
  parallel_for(Delta_eff.size(), opt.threads, [&](std::size_t i) {
    SweepPoint& pt = out[i];
    pt.x = Delta_eff[i];
    pt.n_m = n_m;
    DerivedParams d = base;
    d.Delta_eff = Delta_eff[i];
    d.base.n_m = n_m;
    try {
      detail::steady_effective_point(d, opt, pt);
    } catch (const Error& e) {
      pt.converged = false;
      pt.note = e.what();
    }
  });
  return out;
}

/// Steady <dX^2> (or <dq^2>) on a kappa x G grid. Every point recomputes the
/// drive amplitude, the steady mean field and the effective parameters.
inline std::vector<SweepPoint> kappa_g_sweep(const PhysicalParams& base, const std::vector<double>& kappa,
                                             const std::vector<double>& G, double n_m, const SweepOptions& opt = {}) {
  if (!(n_m >= 0.0)) throw DomainError("kappa_g_sweep: negative thermal occupation");
  std::vector<SweepPoint> out(kappa.size() * G.size());
  parallel_for(out.size(), opt.threads, [&](std::size_t i) {
    SweepPoint& pt = out[i];
    pt.x = kappa[i / G.size()];
    pt.y = G[i % G.size()];
    pt.n_m = n_m;
    try {
      PhysicalParams p = base;
      p.kappa = pt.x;
      p.G = pt.y;
      p.n_m = n_m;
      update_drive(p);
      SteadyMeanField mf;
      const DerivedParams d = derive(p, &mf, opt.meanfield);
      if (opt.method == SweepMethod::reduced_cm) {
        const DriftMatrix A = drift_reduced(d);
        const StabilityReport st = stability_report(A);
        pt.stable = st.hurwitz;
        if (!st.hurwitz) {
          pt.note = "unstable: max Re lambda = " + std::to_string(st.max_real_part);
          return;
        }
        const CovarianceState V = lyapunov_steady(A, diffusion_reduced(p));
        pt.variance = V.V(0, 0);
        pt.phonons = 0.5 * (V.V(0, 0) + V.V(1, 1) - 1.0);
        pt.converged = true;
      } else {
        detail::steady_effective_point(d, opt, pt);
      }
    } catch (const Error& e) {
      pt.converged = false;
      pt.note = e.what();
    }
  });
  return out;
}

}  // namespace optosq
