#pragma once

#include <cstdint>
#include <optional>

#include "levcool/units.hpp"

namespace levcool {

struct ParticleParams {
  double radius = nm_to_m(193.5);  // m
  double density = 1850.0;         // kg/m^3
  std::optional<double> mass_override;  // kg
  double charge = 0.0;  // elementary charges; Paul-trap calculator only

  /// (4/3) pi R^3 rho unless overridden.
  double mass() const;
  void validate() const;
};

struct BathParams {
  double temperature = 293.0;            // K
  double pressure = mbar_to_pa(2.3e-6);  // Pa
  double gas_molecular_mass = 4.8e-26;   // kg (air)

  void validate() const;
};

/// Slow sinusoidal excursion of the trap frequency:
/// omega(t) = omega0 (1 + depth sin(rate t)).
struct FrequencyDrift {
  double depth = 0.0;  // relative
  double rate = 0.0;   // rad/s
};

struct OscillatorParams {
  double omega0 = hz_to_rad(277.0);  // rad/s
  std::optional<FrequencyDrift> drift;
  double offset_force = 0.0;  // N

  double omega_at(double t) const;
  void validate() const;
};

struct SystemParams {
  ParticleParams particle;
  BathParams bath;
  OscillatorParams oscillator;

  double mass() const { return particle.mass(); }
  double omega0() const { return oscillator.omega0; }
  double gamma0() const;
  void validate() const;
};

enum class InitialCondition {
  thermal,  // (x, v) drawn from the Boltzmann distribution at the bath temperature
  rest,     // x = v = 0
  explicit_state,
};

struct SimConfig {
  double dt = 0.0;  // s
  std::uint64_t n_steps = 0;
  std::uint64_t seed = 1;
  double transient_discard = 0.0;  // s
  std::uint64_t record_stride = 1;  // keep every k-th step in the trace
  bool record_probes = true;        // controller internals alongside the state
  InitialCondition initial = InitialCondition::thermal;
  double x0 = 0.0;  // used with explicit_state
  double v0 = 0.0;

  double duration() const { return dt * static_cast<double>(n_steps); }
  void validate(double omega0) const;
};

/// 1/(200 f0): omega0 dt ~ 0.031.
double default_timestep(double omega0);

/// Builds a SimConfig covering `duration` seconds at the default step.
SimConfig make_sim_config(double omega0, double duration, std::uint64_t seed,
                          double transient_discard);

/// Leapfrog state. `v` lives on the half-step grid: it is v(t - dt/2).
struct SimState {
  double x = 0.0;
  double v = 0.0;
  double t = 0.0;
};

}  // namespace levcool
