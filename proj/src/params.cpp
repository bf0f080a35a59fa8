#include "levcool/params.hpp"

#include <cmath>
#include <string>

#include "levcool/dynamics.hpp"
#include "levcool/errors.hpp"

namespace levcool {

double ParticleParams::mass() const {
  if (mass_override) return *mass_override;
  return 4.0 / 3.0 * kPi * radius * radius * radius * density;
}

void ParticleParams::validate() const {
  ProblemList p;
  p.require(radius > 0.0, "particle.radius must be > 0");
  p.require(density > 0.0, "particle.density must be > 0");
  if (mass_override) p.require(*mass_override > 0.0, "particle.mass must be > 0");
  p.require(charge >= 0.0, "particle.charge must be >= 0");
  p.throw_if_any();
}

void BathParams::validate() const {
  ProblemList p;
  p.require(temperature > 0.0, "bath.temperature must be > 0");
  p.require(pressure >= 0.0, "bath.pressure must be >= 0");
  p.require(gas_molecular_mass > 0.0, "bath.gas_molecular_mass must be > 0");
  p.throw_if_any();
}

double OscillatorParams::omega_at(double t) const {
  if (!drift) return omega0;
  return omega0 * (1.0 + drift->depth * std::sin(drift->rate * t));
}

void OscillatorParams::validate() const {
  ProblemList p;
  p.require(omega0 > 0.0, "oscillator.omega0 must be > 0");
  if (drift) {
    p.require(std::abs(drift->depth) < 1.0, "oscillator.drift.depth must satisfy |depth| < 1");
    p.require(drift->rate >= 0.0, "oscillator.drift.rate must be >= 0");
  }
  p.require(std::isfinite(offset_force), "oscillator.offset_force must be finite");
  p.throw_if_any();
}

double SystemParams::gamma0() const { return gamma0_from_pressure(particle, bath); }

void SystemParams::validate() const {
  ProblemList p;
  try {
    particle.validate();
  } catch (const ValidationError& e) {
    p.merge(e);
  }
  try {
    bath.validate();
  } catch (const ValidationError& e) {
    p.merge(e);
  }
  try {
    oscillator.validate();
  } catch (const ValidationError& e) {
    p.merge(e);
  }
  p.throw_if_any();
}

void SimConfig::validate(double omega0) const {
  ProblemList p;
  p.require(dt > 0.0, "simulation.dt_s must be > 0");
  p.require(omega0 * dt < 0.05,
            "simulation.dt_s too coarse: omega0*dt = " + std::to_string(omega0 * dt) +
                " (must be < 0.05)");
  p.require(record_stride >= 1, "simulation.record_stride must be >= 1");
  p.require(transient_discard >= 0.0, "simulation.transient_s must be >= 0");
  if (n_steps > 0) {
    p.require(transient_discard < duration(),
              "simulation.transient_s must be shorter than the run");
  }
  p.throw_if_any();
}

double default_timestep(double omega0) { return 1.0 / (200.0 * rad_to_hz(omega0)); }

SimConfig make_sim_config(double omega0, double duration, std::uint64_t seed,
                          double transient_discard) {
  SimConfig c;
  c.dt = default_timestep(omega0);
  c.n_steps = static_cast<std::uint64_t>(std::llround(duration / c.dt));
  c.seed = seed;
  c.transient_discard = transient_discard;
  return c;
}

}  // namespace levcool
