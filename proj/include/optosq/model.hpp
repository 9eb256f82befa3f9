#pragma once

// Physical constants of the hybrid atom-optomechanical cavity and the
// effective parameters obtained after linearisation and adiabatic elimination
// of the cavity. Every frequency and rate is in units of the bare mechanical
// frequency omega_m; only the drive computation touches laboratory units.

#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "optosq/errors.hpp"

namespace optosq {

inline constexpr double kHbar = 1.054571817e-34;  // J s

struct PhysicalParams {
  double omega_m = 1.0;     ///< mechanical frequency (unit)
  double gamma_m = 1e-6;    ///< mechanical damping
  double g0_prime = 1e-3;   ///< single-photon coupling g0/sqrt(2)
  double omega_c = 1e8;     ///< cavity frequency
  double delta_c = -250.0;  ///< cavity-laser detuning
  double kappa = 3.0;       ///< cavity field decay rate
  double Delta_a = 1.1;     ///< atom-laser detuning
  double gamma_a = 0.1;     ///< atomic decay rate
  double G = 8.0;           ///< collective atom-cavity coupling
  double eta = 0.2;         ///< qubit-induced parametric strength
  double n_m = 0.0;         ///< mean thermal phonon number
  double E = 0.0;           ///< drive amplitude

  // Laboratory inputs used only to compute E.
  double P_mW = 20.0;                                 ///< drive power [mW]
  double omega_m_rad_s = std::numbers::pi * 1.0e6;  ///< omega_m [rad/s]

  double g0() const { return std::sqrt(2.0) * g0_prime; }
  double omega_m_prime() const { return omega_m + 2.0 * eta; }
  double omega_l() const { return omega_c - delta_c; }
};

/// E = sqrt(2 P kappa / (hbar omega_l)) with P in W and kappa, omega_l in rad/s.
/// Result is in rad/s.
inline double drive_amplitude(double power_W, double kappa_rad_s, double omega_l_rad_s) {
  if (!(power_W >= 0.0) || !std::isfinite(power_W)) throw DomainError("drive_amplitude: power must be >= 0");
  if (!(kappa_rad_s > 0.0)) throw DomainError("drive_amplitude: kappa must be positive");
  if (!(omega_l_rad_s > 0.0)) throw DomainError("drive_amplitude: laser frequency must be positive");
  return std::sqrt(2.0 * power_W * kappa_rad_s / (kHbar * omega_l_rad_s));
}

/// Recomputes p.E (in omega_m units) from P_mW, kappa and omega_l.
inline void update_drive(PhysicalParams& p) {
  const double scale = p.omega_m_rad_s / p.omega_m;  // rad/s per internal unit
  p.E = drive_amplitude(p.P_mW * 1e-3, p.kappa * scale, p.omega_l() * scale) / scale;
}

/// The parameter set of the reference mean-field figure.
inline PhysicalParams reference_preset() {
  PhysicalParams p;
  update_drive(p);
  return p;
}

inline void validate(const PhysicalParams& p) {
  const double all[] = {p.omega_m, p.gamma_m, p.g0_prime, p.omega_c, p.delta_c, p.kappa, p.Delta_a,
                        p.gamma_a, p.G,       p.eta,      p.n_m,     p.E,       p.P_mW};
  for (double v : all) {
    if (!std::isfinite(v)) throw DomainError("PhysicalParams: non-finite field");
  }
  if (!(p.omega_m > 0.0)) throw DomainError("PhysicalParams: omega_m must be positive");
  if (p.kappa < 0.0 || p.gamma_a < 0.0 || p.gamma_m < 0.0) throw DomainError("PhysicalParams: negative rate");
  if (p.n_m < 0.0) throw DomainError("PhysicalParams: negative thermal occupation");
}

/// r = ln(1 + 4 eta'/omega_m) / 4.
inline double squeezing_parameter(double eta_prime, double omega_m) {
  const double arg = 1.0 + 4.0 * eta_prime / omega_m;
  if (!(arg > 0.0)) throw DomainError("squeezing_parameter: 1 + 4 eta'/omega_m <= 0 (parametric instability)");
  return 0.25 * std::log(arg);
}

/// Effective quantities after linearisation about the steady amplitudes.
struct DerivedParams {
  PhysicalParams base;  ///< the laboratory-frame parameters these were derived from
  double a_s = 0.0;     ///< |<a>_s|
  double b_s = 0.0;     ///< |<b>_s|

  double Delta_c_eff = 0.0;  ///< delta_c - 2 g0' |<b>_s|
  double G0 = 0.0;           ///< g0' |<a>_s|
  double omega_m_prime = 0.0;
  double omega_m_tilde = 0.0;
  double G_eff = 0.0;
  double eta_prime = 0.0;
  double Delta_eff = 0.0;
  double gamma_eff = 0.0;
  double r = 0.0;
  double omega_m_tilde_prime = 0.0;
  double G_eff_prime = 0.0;

  // Auxiliaries of the closed-form steady position variance.
  double Delta_G = 0.0;
  double Omega_m = 0.0;
  double G_g = 0.0;

  /// 2 omega_m~' / G_eff': how far the Stokes sideband sits off resonance.
  double sideband_ratio() const { return 2.0 * omega_m_tilde_prime / G_eff_prime; }
};

inline DerivedParams effective_params(const PhysicalParams& p, double a_s, double b_s) {
  validate(p);
  if (!std::isfinite(a_s) || !std::isfinite(b_s) || a_s < 0.0 || b_s < 0.0) {
    throw DomainError("effective_params: steady amplitudes must be finite magnitudes");
  }
  DerivedParams d;
  d.base = p;
  d.a_s = a_s;
  d.b_s = b_s;

  const double Dc = p.delta_c - 2.0 * p.g0_prime * b_s;
  if (Dc == 0.0) throw SingularParameterError("effective_params: effective cavity detuning is zero");
  const double den = Dc * Dc + p.kappa * p.kappa;
  const double G0 = p.g0_prime * a_s;

  d.Delta_c_eff = Dc;
  d.G0 = G0;
  d.omega_m_prime = p.omega_m_prime();
  d.eta_prime = p.eta - G0 * G0 * Dc / den;
  d.omega_m_tilde = d.omega_m_prime - 2.0 * G0 * G0 * Dc / den;
  d.G_eff = std::abs(G0 * p.G / std::complex<double>(Dc, -p.kappa));
  d.Delta_eff = p.Delta_a - p.G * p.G * Dc / den;
  d.gamma_eff = p.gamma_a + p.G * p.G * p.kappa / den;

  d.r = squeezing_parameter(d.eta_prime, p.omega_m);
  const double stretch = 1.0 + 4.0 * d.eta_prime / p.omega_m;
  d.omega_m_tilde_prime = p.omega_m * std::sqrt(stretch);
  d.G_eff_prime = d.G_eff * std::pow(stretch, -0.25);

  const double g0 = p.g0();
  d.Delta_G = p.Delta_a - p.G * p.G / Dc;
  d.Omega_m = p.omega_m + 4.0 * p.eta - 2.0 * g0 * g0 * a_s * a_s / Dc;
  d.G_g = std::sqrt(2.0) * g0 * a_s * p.G / Dc;
  return d;
}

/// Resonance of the anti-Stokes (cooling) sideband, Delta_eff = omega_m~'.
inline double optimal_detuning(const DerivedParams& d) { return d.omega_m_tilde_prime; }

}  // namespace optosq
