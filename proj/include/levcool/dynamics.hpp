#pragma once

#include "levcool/controller.hpp"
#include "levcool/detection.hpp"
#include "levcool/params.hpp"
#include "levcool/rng.hpp"
#include "levcool/trace.hpp"

namespace levcool {

/// Kinetic gas damping rate (rad/s) of a sphere:
///   gamma0 = (1 + pi/8) (4 pi / 3) M N R^2 v_T / m,
/// with N = p/(k_B T0) and v_T = sqrt(8 k_B T0 / (pi M)).
double gamma0_from_pressure(const ParticleParams& particle, const BathParams& bath);

/// Discretised Langevin force: zero-mean Gaussian with variance
/// 2 m k_B T0 gamma0 / dt, independent from step to step.
class ThermalForce {
 public:
  ThermalForce(double mass, double gamma0, double temperature, double dt);

  double sigma() const noexcept { return sigma_; }
  double variance() const noexcept { return sigma_ * sigma_; }
  double operator()(Rng& rng) { return sigma_ > 0.0 ? sigma_ * gauss_(rng) : 0.0; }

 private:
  double sigma_;
  Gaussian gauss_;
};

double thermal_kick(const BathParams& bath, const ParticleParams& particle, double dt, Rng& rng);

/// Symplectic leapfrog for
///   x' = v,
///   v' = -gamma0 v - omega(t)^2 (1 - mod) x + (F_fb + F_offset + F_th)/m.
/// Positions sit on integer steps, velocities on half steps. The gas damping
/// term uses the mid-point velocity (v_{n-1/2} + v_{n+1/2})/2, which keeps the
/// scheme time-reversible when gamma0 = 0.
class LeapfrogIntegrator {
 public:
  LeapfrogIntegrator(const SystemParams& params, double dt);

  double dt() const noexcept { return dt_; }
  double gamma0() const noexcept { return gamma0_; }

  /// Advances x by one step and v by one step on the staggered grid.
  /// `full_step_velocity`, when given, receives v(t_n).
  SimState advance(const SimState& s, double feedback_force, double stiffness_modulation,
                   double thermal_force, double* full_step_velocity = nullptr) const;

  /// Half-step velocity v(-dt/2) matching a full-step initial velocity.
  double initial_half_step_velocity(double x0, double v0) const;

 private:
  OscillatorParams osc_;
  double dt_;
  double inv_mass_;
  double gamma0_;
  double damp_minus_;  // 1 - gamma0 dt / 2
  double damp_plus_inv_;  // 1 / (1 + gamma0 dt / 2)
};

/// One step with its own thermal kick drawn from `rng`.
SimState step(const SimState& state, const SystemParams& params, double feedback_force,
              double stiffness_modulation, double dt, Rng& rng);

/// Runs a full simulation. Identical (params, detection, controller config,
/// sim config) give bit-identical traces. Throws SimulationFault with the step
/// index on non-finite state or controller failure.
SimTrace run(const SystemParams& params, const DetectionModel& detection,
             Controller& controller, const SimConfig& config);

}  // namespace levcool
