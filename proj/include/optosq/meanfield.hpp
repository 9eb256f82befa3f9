#pragma once

// Classical mean values of the driven hybrid system: integration of the two
// equivalent formulations (cavity/mechanical/atomic amplitudes a, b, c, and
// mirror position/momentum q, p with a, c) and extraction of the steady point.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include "optosq/errors.hpp"
#include "optosq/model.hpp"
#include "optosq/ode.hpp"
#include "optosq/qcore.hpp"
#include "optosq/timeseries.hpp"

namespace optosq {

enum class MeanFieldForm { abc, qpac };

/// One sample of the classical amplitudes. In the q,p formulation
/// b holds (q + i p)/sqrt(2).
struct MeanFieldState {
  double t = 0.0;
  cplx a{};
  cplx b{};
  cplx c{};

  double q() const { return std::sqrt(2.0) * b.real(); }
  double p() const { return std::sqrt(2.0) * b.imag(); }

  static MeanFieldState from_qp(double t, double q, double p, cplx a, cplx c) {
    return {t, a, cplx(q, p) / std::sqrt(2.0), c};
  }
};

using AbcVector = Eigen::Vector3cd;
using QpacVector = Eigen::Vector4cd;  // q, p (real), a, c

inline AbcVector meanfield_abc_rhs(const PhysicalParams& p, const AbcVector& y) {
  const cplx a = y(0), b = y(1), c = y(2);
  AbcVector dy;
  dy(0) = -cplx(p.kappa, p.delta_c) * a - kI * p.G * c + kI * p.g0_prime * a * (b + std::conj(b)) - kI * p.E;
  dy(1) = -cplx(p.gamma_m, p.omega_m_prime()) * b - 2.0 * kI * p.eta * std::conj(b) + kI * p.g0_prime * std::norm(a);
  dy(2) = -cplx(p.gamma_a, p.Delta_a) * c - kI * p.G * a;
  return dy;
}

inline QpacVector meanfield_qpac_rhs(const PhysicalParams& p, const QpacVector& y) {
  const double q = y(0).real(), mom = y(1).real();
  const cplx a = y(2), c = y(3);
  const double g0 = p.g0();
  QpacVector dy;
  dy(0) = p.omega_m * mom;
  dy(1) = -(p.omega_m + 4.0 * p.eta) * q - p.gamma_m * mom + g0 * std::norm(a);
  dy(2) = -cplx(p.kappa, p.delta_c) * a + kI * g0 * a * q - kI * p.G * c - kI * p.E;
  dy(3) = -cplx(p.gamma_a, p.Delta_a) * c - kI * p.G * a;
  return dy;
}

/// Largest |d/dt| of the chosen formulation evaluated at `s`.
inline double meanfield_residual(const PhysicalParams& p, const MeanFieldState& s, MeanFieldForm form) {
  if (form == MeanFieldForm::abc) return meanfield_abc_rhs(p, AbcVector(s.a, s.b, s.c)).cwiseAbs().maxCoeff();
  return meanfield_qpac_rhs(p, QpacVector(s.q(), s.p(), s.a, s.c)).cwiseAbs().maxCoeff();
}

/// Step-size rule: the cavity detuning sets the stiffness.
inline double default_meanfield_dt(const PhysicalParams& p) {
  const double fastest = std::max({std::abs(p.delta_c), p.kappa, p.G, std::abs(p.Delta_a), p.omega_m});
  return 0.5 / fastest;
}

/// Sampled mean-field trajectory on a uniform time grid.
class MeanFieldTrajectory {
 public:
  MeanFieldTrajectory(MeanFieldForm form, double sample_dt) : form_(form), sample_dt_(sample_dt) {}

  MeanFieldForm form() const { return form_; }
  double sample_dt() const { return sample_dt_; }
  const std::vector<MeanFieldState>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  const MeanFieldState& front() const { return samples_.front(); }
  const MeanFieldState& back() const { return samples_.back(); }
  double t_begin() const { return samples_.front().t; }
  double t_end() const { return samples_.back().t; }

  void push(const MeanFieldState& s) { samples_.push_back(s); }

  /// Piecewise-linear interpolation; throws RangeError outside the stored span.
  MeanFieldState at(double t) const {
    if (samples_.empty()) throw RangeError("MeanFieldTrajectory::at: empty trajectory");
    const double slack = 1e-9 * std::max(1.0, std::abs(t_end()));
    if (t < t_begin() - slack || t > t_end() + slack) {
      throw RangeError("MeanFieldTrajectory::at: t=" + std::to_string(t) + " outside [" +
                       std::to_string(t_begin()) + ", " + std::to_string(t_end()) + "]");
    }
    const double x = (t - t_begin()) / sample_dt_;
    std::size_t i = static_cast<std::size_t>(std::max(0.0, std::floor(x)));
    if (i + 1 >= samples_.size()) return samples_.back();
    const double w = std::clamp(x - static_cast<double>(i), 0.0, 1.0);
    const MeanFieldState& s0 = samples_[i];
    const MeanFieldState& s1 = samples_[i + 1];
    return {t, (1.0 - w) * s0.a + w * s1.a, (1.0 - w) * s0.b + w * s1.b, (1.0 - w) * s0.c + w * s1.c};
  }

  /// Columns: Re/Im of a, b, c (abc form) or q, p, Re/Im of a, c (qpac form).
  TimeSeries to_timeseries() const {
    if (form_ == MeanFieldForm::abc) {
      TimeSeries ts({"re_a", "im_a", "re_b", "im_b", "re_c", "im_c"});
      for (const auto& s : samples_) {
        ts.append(s.t, {s.a.real(), s.a.imag(), s.b.real(), s.b.imag(), s.c.real(), s.c.imag()});
      }
      return ts;
    }
    TimeSeries ts({"q", "p", "re_a", "im_a", "re_c", "im_c"});
    for (const auto& s : samples_) ts.append(s.t, {s.q(), s.p(), s.a.real(), s.a.imag(), s.c.real(), s.c.imag()});
    return ts;
  }

 private:
  MeanFieldForm form_;
  double sample_dt_;
  std::vector<MeanFieldState> samples_;
};

/// Resumable fixed-step integrator of either formulation.
class MeanFieldIntegrator {
 public:
  MeanFieldIntegrator(const PhysicalParams& p, MeanFieldForm form, double dt, MeanFieldState start = {})
      : p_(p), form_(form), dt_(dt), state_(start) {
    validate(p_);
    if (!(dt > 0.0)) throw DomainError("MeanFieldIntegrator: dt must be positive");
  }

  const MeanFieldState& state() const { return state_; }
  double time() const { return state_.t; }
  double dt() const { return dt_; }

  /// Advances to `t_to` in steps of dt, calling `sink(state)` after every
  /// `stride`-th step.
  template <class Sink>
  void advance(double t_to, long stride, Sink&& sink) {
    const double span = t_to - state_.t;
    if (span <= 0.0) return;
    const long steps = static_cast<long>(std::llround(span / dt_));
    const double t0 = state_.t;
    for (long n = 1; n <= std::max(1L, steps); ++n) {
      const double t = state_.t;
      if (form_ == MeanFieldForm::abc) {
        AbcVector y(state_.a, state_.b, state_.c);
        abc_.step([&](double, const AbcVector& x, AbcVector& dx) { dx = meanfield_abc_rhs(p_, x); }, t, y, dt_);
        state_.a = y(0);
        state_.b = y(1);
        state_.c = y(2);
      } else {
        QpacVector y(state_.q(), state_.p(), state_.a, state_.c);
        qpac_.step([&](double, const QpacVector& x, QpacVector& dx) { dx = meanfield_qpac_rhs(p_, x); }, t, y, dt_);
        state_ = MeanFieldState::from_qp(t, y(0).real(), y(1).real(), y(2), y(3));
      }
      state_.t = t0 + static_cast<double>(n) * dt_;
      const double size = std::max({std::abs(state_.a), std::abs(state_.b), std::abs(state_.c)});
      if (!std::isfinite(size) || size > 1e12) throw InstabilityError("mean-field integration diverged", state_.t);
      if (n % stride == 0) sink(state_);
    }
  }

 private:
  PhysicalParams p_;
  MeanFieldForm form_;
  double dt_;
  MeanFieldState state_;
  Rk4<AbcVector> abc_;
  Rk4<QpacVector> qpac_;
};

inline MeanFieldTrajectory integrate_meanfield(const PhysicalParams& p, MeanFieldForm form, double t_final, double dt,
                                               long stride = 1) {
  if (!(t_final > 0.0)) throw DomainError("integrate_meanfield: t_final must be positive");
  if (stride < 1) throw DomainError("integrate_meanfield: stride must be >= 1");
  MeanFieldIntegrator integrator(p, form, dt);
  MeanFieldTrajectory traj(form, dt * static_cast<double>(stride));
  traj.push(integrator.state());
  integrator.advance(t_final, stride, [&](const MeanFieldState& s) { traj.push(s); });
  return traj;
}

/// Eq. set in a, b, c starting from all-zero amplitudes.
inline MeanFieldTrajectory integrate_meanfield_abc(const PhysicalParams& p, double t_final, double dt, long stride = 1) {
  return integrate_meanfield(p, MeanFieldForm::abc, t_final, dt, stride);
}

/// Eq. set in q, p, a, c starting from all-zero amplitudes.
inline MeanFieldTrajectory integrate_meanfield_qpac(const PhysicalParams& p, double t_final, double dt,
                                                    long stride = 1) {
  return integrate_meanfield(p, MeanFieldForm::qpac, t_final, dt, stride);
}

struct SteadyMeanField {
  double a_s = 0.0;  ///< |<a>_s|
  double b_s = 0.0;  ///< |<b>_s|
  double q_s = 0.0;  ///< |<q>_s|
  double residual = 0.0;
  double ratio_a = 0.0;  ///< |Re a| / |Im a|
  double ratio_b = 0.0;  ///< |Re b| / |Im b| (infinite in the q,p form)
  double t = 0.0;        ///< time at which the steady point was taken
  MeanFieldState state;  ///< complex amplitudes at that time
};

inline double dominance_ratio(cplx z) {
  return z.imag() == 0.0 ? std::numeric_limits<double>::infinity() : std::abs(z.real()) / std::abs(z.imag());
}

/// Reads the steady point off the tail of a trajectory.
///
/// The last 10% of samples must vary by less than `tail_tolerance` relative
/// to the final amplitudes; otherwise NotSteadyError.
inline SteadyMeanField steady_state(const MeanFieldTrajectory& traj, const PhysicalParams& p,
                                    double tail_tolerance = 1e-8) {
  const auto& s = traj.samples();
  if (s.size() < 10) throw NotSteadyError("steady_state: trajectory too short");
  const MeanFieldState& last = s.back();
  const std::size_t start = s.size() - std::max<std::size_t>(2, s.size() / 10);
  double variation = 0.0;
  for (std::size_t i = start; i < s.size(); ++i) {
    variation = std::max({variation, std::abs(s[i].a - last.a) / std::max(1.0, std::abs(last.a)),
                          std::abs(s[i].b - last.b) / std::max(1.0, std::abs(last.b)),
                          std::abs(s[i].c - last.c) / std::max(1.0, std::abs(last.c))});
  }
  if (!(variation < tail_tolerance)) {
    throw NotSteadyError("steady_state: tail still varies by " + std::to_string(variation) + " (relative)");
  }
  SteadyMeanField out;
  out.state = last;
  out.t = last.t;
  out.a_s = std::abs(last.a);
  out.b_s = std::abs(last.b);
  out.q_s = std::abs(last.q());
  out.ratio_a = dominance_ratio(last.a);
  out.ratio_b = dominance_ratio(last.b);
  out.residual = meanfield_residual(p, last, traj.form());
  return out;
}

struct SteadySearchOptions {
  double t_initial = 200.0;
  double t_max = 102400.0;
  double dt = 0.0;  ///< 0 selects default_meanfield_dt
  double residual_tolerance = 1e-6;
  double tail_tolerance = 1e-8;
  long samples_per_tail = 400;
};

/// Integrates from zero to t_initial and keeps doubling the horizon until the
/// tail is steady and the fixed-point residual is below tolerance.
inline SteadyMeanField find_steady_meanfield(const PhysicalParams& p, MeanFieldForm form = MeanFieldForm::abc,
                                             const SteadySearchOptions& opt = {}) {
  const double dt = opt.dt > 0.0 ? opt.dt : default_meanfield_dt(p);
  MeanFieldIntegrator integrator(p, form, dt);
  std::string last_reason = "not attempted";
  for (double horizon = opt.t_initial; horizon <= opt.t_max * (1.0 + 1e-12); horizon *= 2.0) {
    const double tail_start = 0.9 * horizon;
    integrator.advance(tail_start, 1L << 40, [](const MeanFieldState&) {});
    const long tail_steps = std::max(1L, static_cast<long>(std::llround((horizon - integrator.time()) / dt)));
    const long stride = std::max(1L, tail_steps / opt.samples_per_tail);
    MeanFieldTrajectory tail(form, dt * static_cast<double>(stride));
    tail.push(integrator.state());
    integrator.advance(horizon, stride, [&](const MeanFieldState& s) { tail.push(s); });
    try {
      SteadyMeanField st = steady_state(tail, p, opt.tail_tolerance);
      if (st.residual < opt.residual_tolerance) return st;
      last_reason = "residual " + std::to_string(st.residual);
    } catch (const NotSteadyError& e) {
      last_reason = e.what();
    }
  }
  throw NotSteadyError("find_steady_meanfield: no steady state up to t=" + std::to_string(opt.t_max) + " (" +
                       last_reason + ")");
}

/// Steady mean field followed by the effective-parameter formulas.
inline DerivedParams derive(const PhysicalParams& p, SteadyMeanField* steady_out = nullptr,
                            const SteadySearchOptions& opt = {}) {
  const SteadyMeanField st = find_steady_meanfield(p, MeanFieldForm::abc, opt);
  if (steady_out) *steady_out = st;
  return effective_params(p, st.a_s, st.b_s);
}

}  // namespace optosq
