#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "optosq/model.hpp"

using namespace optosq;

namespace {

// Steady amplitudes of the reference preset, as produced by the mean-field
// integrator (frozen here so these tests exercise the formulas alone).
constexpr double kAs = 3352.3393541382043;
constexpr double kBs = 6243.432858627462;

}  // namespace

TEST(Preset, MatchesCaptionValues) {
  const PhysicalParams p = reference_preset();
  EXPECT_EQ(p.gamma_m, 1e-6);
  EXPECT_EQ(p.g0_prime, 1e-3);
  EXPECT_EQ(p.omega_c, 1e8);
  EXPECT_EQ(p.delta_c, -250.0);
  EXPECT_EQ(p.kappa, 3.0);
  EXPECT_EQ(p.Delta_a, 1.1);
  EXPECT_EQ(p.gamma_a, 0.1);
  EXPECT_EQ(p.G, 8.0);
  EXPECT_EQ(p.eta, 0.2);
  EXPECT_EQ(p.P_mW, 20.0);
}

TEST(Drive, PresetAmplitudeByDirectArithmetic) {
  const double wm = std::numbers::pi * 1e6;
  const double P = 0.020, kappa = 3.0 * wm, wl = (1e8 + 250.0) * wm;
  const double E_rad = std::sqrt(2.0 * P * kappa / (1.054571817e-34 * wl));
  const PhysicalParams p = reference_preset();
  EXPECT_NEAR(p.E, E_rad / wm, 1e-9 * p.E);
  EXPECT_NEAR(p.E, 1.0737e6, 0.0001e6);
}

TEST(Drive, SquareRootLawAndZeroPower) {
  EXPECT_EQ(drive_amplitude(0.0, 1.0, 1.0), 0.0);
  EXPECT_NEAR(drive_amplitude(4e-3, 2.0, 5.0), 2.0 * drive_amplitude(1e-3, 2.0, 5.0), 1e-6);
  EXPECT_THROW(drive_amplitude(-1.0, 1.0, 1.0), DomainError);
  EXPECT_THROW(drive_amplitude(1.0, 0.0, 1.0), DomainError);
  EXPECT_THROW(drive_amplitude(1.0, 1.0, -1.0), DomainError);
}

TEST(EffectiveParams, PresetByIndependentFormulas) {
  const PhysicalParams p = reference_preset();
  const DerivedParams d = effective_params(p, kAs, kBs);
  // Written out again from the defining relations.
  const double Dc = -250.0 - 2e-3 * kBs;
  const double G0 = 1e-3 * kAs;
  const double den = Dc * Dc + 9.0;
  EXPECT_NEAR(d.Delta_c_eff, Dc, 1e-12);
  EXPECT_NEAR(d.eta_prime, 0.2 - G0 * G0 * Dc / den, 1e-12);
  EXPECT_NEAR(d.Delta_eff, 1.1 - 64.0 * Dc / den, 1e-12);
  EXPECT_NEAR(d.gamma_eff, 0.1 + 64.0 * 3.0 / den, 1e-12);
  EXPECT_NEAR(d.G_eff, G0 * 8.0 / std::sqrt(den), 1e-12);
  EXPECT_NEAR(d.Delta_G, 1.1 - 64.0 / Dc, 1e-12);
  EXPECT_NEAR(d.Omega_m, 1.0 + 0.8 - 2.0 * 2e-6 * kAs * kAs / Dc, 1e-10);
  EXPECT_NEAR(d.G_g, std::sqrt(2.0) * std::sqrt(2.0) * 1e-3 * kAs * 8.0 / Dc, 1e-12);
}

TEST(EffectiveParams, PresetValuesFrozen) {
  const DerivedParams d = effective_params(reference_preset(), kAs, kBs);
  EXPECT_NEAR(d.Delta_c_eff, -262.48686571725494, 1e-9);
  EXPECT_NEAR(d.eta_prime, 0.24280866136149243, 1e-12);
  EXPECT_NEAR(d.Delta_eff, 1.3437898783879427, 1e-12);
  EXPECT_NEAR(d.gamma_eff, 0.1027863094527238, 1e-12);
  EXPECT_NEAR(d.r, 0.16966501750433188, 1e-12);
  EXPECT_NEAR(d.omega_m_tilde_prime, 1.4040066401003841, 1e-12);
}

TEST(EffectiveParams, PaperQuotedOptimumAndSidebandRatio) {
  const DerivedParams d = effective_params(reference_preset(), kAs, kBs);
  EXPECT_NEAR(optimal_detuning(d), 1.4, 0.05);
  EXPECT_NEAR(d.sideband_ratio(), 32.0, 1.0);
}

TEST(EffectiveParams, DecoupledAtoms) {
  PhysicalParams p = reference_preset();
  p.G = 0.0;
  const DerivedParams d = effective_params(p, kAs, kBs);
  EXPECT_EQ(d.Delta_eff, p.Delta_a);
  EXPECT_EQ(d.gamma_eff, p.gamma_a);
  EXPECT_EQ(d.G_eff, 0.0);
}

TEST(EffectiveParams, NoBackaction) {
  const PhysicalParams p = reference_preset();
  const DerivedParams d = effective_params(p, 0.0, kBs);
  EXPECT_EQ(d.eta_prime, p.eta);
  EXPECT_DOUBLE_EQ(d.omega_m_tilde, p.omega_m + 2.0 * p.eta);
}

TEST(EffectiveParams, BareResonanceWithoutParametricTerm) {
  PhysicalParams p = reference_preset();
  p.eta = 0.0;
  const DerivedParams d = effective_params(p, 0.0, 0.0);
  EXPECT_EQ(d.r, 0.0);
  EXPECT_DOUBLE_EQ(optimal_detuning(d), 1.0);
}

TEST(EffectiveParams, SingularCavityDetuning) {
  PhysicalParams p = reference_preset();
  p.delta_c = 2.0 * p.g0_prime * 100.0;
  EXPECT_THROW(effective_params(p, 10.0, 100.0), SingularParameterError);
  EXPECT_THROW(effective_params(p, -1.0, 1.0), DomainError);
}

TEST(EffectiveParams, RandomInputsSatisfyIdentities) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    PhysicalParams p;
    p.delta_c = -50.0 - 400.0 * u(rng);
    p.kappa = 0.1 + 5.0 * u(rng);
    p.G = 10.0 * u(rng);
    p.eta = 0.3 * u(rng);
    p.Delta_a = 3.0 * u(rng);
    p.gamma_a = 0.5 * u(rng);
    p.g0_prime = 1e-3 * (0.5 + u(rng));
    const DerivedParams d = effective_params(p, 5000.0 * u(rng), 8000.0 * u(rng));
    EXPECT_NEAR(d.omega_m_tilde, p.omega_m + 2.0 * d.eta_prime, 1e-12);
    EXPECT_NEAR(std::exp(4.0 * d.r), 1.0 + 4.0 * d.eta_prime / p.omega_m, 1e-12);
    const double stretch = 1.0 + 4.0 * d.eta_prime;
    EXPECT_NEAR(d.omega_m_tilde_prime, std::sqrt(stretch), 1e-12);
    EXPECT_NEAR(d.G_eff_prime, d.G_eff * std::pow(stretch, -0.25), 1e-12);
    EXPECT_GE(d.gamma_eff, p.gamma_a);
  }
}

TEST(EffectiveParams, UnitScalingInvariance) {
  const PhysicalParams p = reference_preset();
  const DerivedParams d = effective_params(p, kAs, kBs);
  const double s = 3.7;
  PhysicalParams q = p;
  for (double* f : {&q.omega_m, &q.gamma_m, &q.g0_prime, &q.omega_c, &q.delta_c, &q.kappa, &q.Delta_a, &q.gamma_a,
                    &q.G, &q.eta, &q.E}) {
    *f *= s;
  }
  // Amplitudes are photon/phonon-number square roots and do not carry units.
  const DerivedParams e = effective_params(q, kAs, kBs);
  for (auto [x, y] : {std::pair{d.Delta_c_eff, e.Delta_c_eff}, {d.G0, e.G0}, {d.omega_m_tilde, e.omega_m_tilde},
                      {d.G_eff, e.G_eff}, {d.eta_prime, e.eta_prime}, {d.Delta_eff, e.Delta_eff},
                      {d.gamma_eff, e.gamma_eff}, {d.omega_m_tilde_prime, e.omega_m_tilde_prime},
                      {d.G_eff_prime, e.G_eff_prime}, {d.Delta_G, e.Delta_G}, {d.Omega_m, e.Omega_m}, {d.G_g, e.G_g}}) {
    EXPECT_NEAR(y, s * x, 1e-12 * std::abs(s * x) + 1e-14);
  }
  EXPECT_NEAR(e.r, d.r, 1e-14);
}

TEST(SqueezingParameter, InverseAndDomain) {
  EXPECT_EQ(squeezing_parameter(0.0, 1.0), 0.0);
  for (double eta : {0.01, 0.1, 0.27, 1.5}) {
    EXPECT_NEAR(std::exp(4.0 * squeezing_parameter(eta, 1.0)) - 1.0, 4.0 * eta, 1e-12);
  }
  EXPECT_THROW(squeezing_parameter(-0.25, 1.0), DomainError);
  EXPECT_THROW(squeezing_parameter(-0.3, 1.0), DomainError);
}

TEST(Validate, RejectsNegativeRates) {
  PhysicalParams p = reference_preset();
  p.kappa = -1.0;
  EXPECT_THROW(validate(p), DomainError);
  p = reference_preset();
  p.n_m = -0.5;
  EXPECT_THROW(validate(p), DomainError);
  p = reference_preset();
  p.G = std::nan("");
  EXPECT_THROW(validate(p), DomainError);
}
