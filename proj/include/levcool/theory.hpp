#pragma once

#include <optional>

namespace levcool::theory {

/// Inputs shared by the closed-form predictions. Rates in rad/s, S_nn is the
/// two-sided detection-noise density (per-sample variance S_nn/dt).
struct TheoryInputs {
  double mass = 0.0;         // kg
  double omega0 = 0.0;       // rad/s
  double gamma0 = 0.0;       // rad/s
  double temperature = 0.0;  // K
  double noise_psd = 0.0;    // m^2/Hz
  std::optional<double> gamma_fb;          // rad/s
  std::optional<double> modulation_depth;  // G
  std::optional<double> zeta;
  std::optional<double> omega_n;  // rad/s

  void validate() const;
};

/// Baseline parameter set: R = 193.5 nm silica (1850 kg/m^3), f0 = 277 Hz,
/// gamma0 = 2 pi x 780 uHz, S_nn = 1.5e-17 m^2/Hz, T0 = 293 K.
TheoryInputs reference_inputs();

struct VdTemperature {
  double total;    // K
  double thermal;  // T0 gamma0 / (gamma0 + gamma_fb)
  double noise;    // (m omega0^2 / 2 k_B) gamma_fb^2 S_nn / (gamma0 + gamma_fb)
};

/// Velocity-damping CoM temperature (high-Q, equipartition).
VdTemperature vd_temperature_terms(const TheoryInputs& in);
double vd_temperature(const TheoryInputs& in);

struct VdOptimum {
  double gamma_fb;  // rad/s
  double t_min;     // K
};
/// Optimum gain and minimum temperature for gamma_fb >> gamma0.
VdOptimum vd_optimum(const TheoryInputs& in);

struct PllLimits {
  double b3db;      // rad/s
  double g_lim;     // 2 B_3dB / omega0
  double t_lim1;    // K, T0 gamma0 / B_3dB
  double b_l_hz;    // loop noise bandwidth, Hz
  double t_lim2;    // K, (m omega0^2 / k_B) 2 B_L S_nn
};
/// Bounds for PLL parametric feedback; needs zeta and omega_n.
PllLimits pll_limits(const TheoryInputs& in);
/// Same bounds evaluated directly at a bandwidth in the zeta^2 >> 1 limit,
/// where B_L = B_3dB / (8 pi).
PllLimits pll_limits_at_bandwidth(const TheoryInputs& in, double b3db);

struct PllOptimum {
  double b3db;   // rad/s
  double t_min;  // K
};
/// Bandwidth where the two PLL bounds meet (zeta^2 >> 1).
PllOptimum pll_optimum(const TheoryInputs& in);

enum class Scheme { thermal, velocity_damping, pll };

/// Effective temperature of the Boltzmann-Gibbs energy distribution.
double effective_temperature(Scheme scheme, const TheoryInputs& in);
/// Normalised P(E) = exp(-E / k_B T_eff) / (k_B T_eff); E >= 0.
double energy_pdf(Scheme scheme, const TheoryInputs& in, double energy);

/// Spectral densities of the velocity-damped oscillator (two-sided, per
/// d omega / 2 pi).
double position_psd(const TheoryInputs& in, double gamma_fb, double omega);
double momentum_psd(const TheoryInputs& in, double gamma_fb, double omega);

struct PhaseSpaceVariance {
  double x_var;  // m^2
  double p_var;  // (kg m/s)^2
};
/// Integrates the position and momentum spectra over (-cutoff, cutoff).
PhaseSpaceVariance variance_xp(const TheoryInputs& in, double gamma_fb, double cutoff);
/// Closed form of <x^2> for an unlimited bandwidth.
double position_variance_closed_form(const TheoryInputs& in, double gamma_fb);

struct TrapParams {
  double r0 = 1.1e-3;  // m
  double z0 = 3.5e-3;  // m
  double kappa = 0.071;
  double eta = 0.82;
  double u0 = 0.0;        // V, endcap DC
  double v0 = 0.0;        // V, rod RF amplitude
  double omega_rf = 0.0;  // rad/s
  double charge_to_mass = 0.0;  // C/kg
};

struct TrapFrequencies {
  double q_x;
  double a_x;
  double a_z;
  double omega_x;  // rad/s, = omega_y
  double omega_y;
  double omega_z;
  bool stability_ok;  // |a_i| and q_i^2 below 0.1
};

/// Secular frequencies of a linear Paul trap in the |a|, q^2 << 1 limit.
/// Throws ValidationError when a secular frequency would be imaginary.
TrapFrequencies paul_trap_frequencies(const TrapParams& trap);

}  // namespace levcool::theory
