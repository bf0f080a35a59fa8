#include "levcool/dynamics.hpp"

#include <cmath>
#include <exception>

#include "levcool/errors.hpp"

namespace levcool {

double gamma0_from_pressure(const ParticleParams& particle, const BathParams& bath) {
  ProblemList p;
  p.require(bath.temperature > 0.0, "bath temperature must be > 0");
  p.require(bath.pressure >= 0.0, "bath pressure must be >= 0");
  p.require(bath.gas_molecular_mass > 0.0, "gas molecular mass must be > 0");
  p.throw_if_any();
  particle.validate();

  const double n_density = bath.pressure / (kBoltzmann * bath.temperature);
  const double v_thermal =
      std::sqrt(8.0 * kBoltzmann * bath.temperature / (kPi * bath.gas_molecular_mass));
  const double r = particle.radius;
  return (1.0 + kPi / 8.0) * (4.0 * kPi / 3.0) * bath.gas_molecular_mass * n_density * r * r *
         v_thermal / particle.mass();
}

ThermalForce::ThermalForce(double mass, double gamma0, double temperature, double dt) {
  if (dt <= 0.0) throw ValidationError("thermal force dt must be > 0");
  sigma_ = std::sqrt(2.0 * mass * kBoltzmann * temperature * gamma0 / dt);
}

double thermal_kick(const BathParams& bath, const ParticleParams& particle, double dt, Rng& rng) {
  ThermalForce force(particle.mass(), gamma0_from_pressure(particle, bath), bath.temperature, dt);
  return force(rng);
}

LeapfrogIntegrator::LeapfrogIntegrator(const SystemParams& params, double dt)
    : osc_(params.oscillator),
      dt_(dt),
      inv_mass_(1.0 / params.mass()),
      gamma0_(params.gamma0()),
      damp_minus_(1.0 - 0.5 * gamma0_ * dt),
      damp_plus_inv_(1.0 / (1.0 + 0.5 * gamma0_ * dt)) {
  if (dt <= 0.0) throw ValidationError("integrator dt must be > 0");
}

SimState LeapfrogIntegrator::advance(const SimState& s, double feedback_force,
                                     double stiffness_modulation, double thermal_force,
                                     double* full_step_velocity) const {
  const double w = osc_.drift ? osc_.omega_at(s.t) : osc_.omega0;
  const double accel = -w * w * (1.0 - stiffness_modulation) * s.x +
                       (feedback_force + osc_.offset_force + thermal_force) * inv_mass_;
  const double v_next = (s.v * damp_minus_ + accel * dt_) * damp_plus_inv_;
  if (full_step_velocity) *full_step_velocity = 0.5 * (s.v + v_next);
  return {s.x + v_next * dt_, v_next, s.t + dt_};
}

double LeapfrogIntegrator::initial_half_step_velocity(double x0, double v0) const {
  const double w = osc_.omega0;
  const double accel = -w * w * x0 - gamma0_ * v0 + osc_.offset_force * inv_mass_;
  return v0 - 0.5 * dt_ * accel;
}

SimState step(const SimState& state, const SystemParams& params, double feedback_force,
              double stiffness_modulation, double dt, Rng& rng) {
  if (!(std::abs(stiffness_modulation) < 1.0)) {
    throw ValidationError("stiffness modulation must satisfy |mod| < 1");
  }
  LeapfrogIntegrator integrator(params, dt);
  ThermalForce kick(params.mass(), integrator.gamma0(), params.bath.temperature, dt);
  SimState next = integrator.advance(state, feedback_force, stiffness_modulation, kick(rng));
  if (!std::isfinite(next.x) || !std::isfinite(next.v)) {
    throw SimulationFault(0, "non-finite state");
  }
  return next;
}

SimTrace run(const SystemParams& params, const DetectionModel& detection,
             Controller& controller, const SimConfig& config) {
  params.validate();
  detection.validate();
  config.validate(params.omega0());

  const double dt = config.dt;
  const double mass = params.mass();
  const double temperature = params.bath.temperature;
  const LeapfrogIntegrator integrator(params, dt);
  ThermalForce thermal(mass, integrator.gamma0(), temperature, dt);

  Rng thermal_rng = make_stream(config.seed, Stream::thermal);
  Detector detector(detection, dt, make_stream(config.seed, Stream::detection));

  SimTrace trace;
  trace.dt = dt * static_cast<double>(config.record_stride);
  if (config.record_probes) trace.probe_names = controller.probe_names();
  trace.probes.resize(trace.probe_names.size());
  if (config.n_steps == 0) return trace;

  const std::size_t rows = static_cast<std::size_t>(
      (config.n_steps + config.record_stride - 1) / config.record_stride);
  for (auto* col : {&trace.t, &trace.x, &trace.v, &trace.x_measured, &trace.feedback}) {
    col->reserve(rows);
  }
  for (auto& p : trace.probes) p.reserve(rows);
  trace.transient_rows = static_cast<std::size_t>(
      std::ceil(config.transient_discard / trace.dt - 1e-9));

  double x0 = 0.0;
  double v0 = 0.0;
  switch (config.initial) {
    case InitialCondition::thermal: {
      Rng init = make_stream(config.seed, Stream::initial_state);
      Gaussian g;
      const double w = params.omega0();
      x0 = std::sqrt(kBoltzmann * temperature / (mass * w * w)) * g(init) +
           params.oscillator.offset_force / (mass * w * w);
      v0 = std::sqrt(kBoltzmann * temperature / mass) * g(init);
      break;
    }
    case InitialCondition::rest:
      break;
    case InitialCondition::explicit_state:
      x0 = config.x0;
      v0 = config.v0;
      break;
  }

  SimState state{x0, integrator.initial_half_step_velocity(x0, v0), 0.0};
  std::vector<double> probe_buf(trace.probe_names.size());

  // The recorded measurement is the mean over the record interval ending at
  // each kept row, so a coarse stride does not alias detector noise.
  double measured_sum = 0.0;
  std::uint64_t measured_count = 0;

  for (std::uint64_t n = 0; n < config.n_steps; ++n) {
    const double measured = detector.measure(state.x, state.t);
    measured_sum += measured;
    ++measured_count;
    ControlAction action;
    try {
      action = controller.update(measured, state.t);
    } catch (const std::exception& e) {
      throw SimulationFault(n, std::string("controller fault: ") + e.what());
    }
    if (!(std::abs(action.stiffness_modulation) < 1.0) || !std::isfinite(action.force)) {
      throw SimulationFault(n, "controller produced an invalid action");
    }

    double v_full = 0.0;
    const SimState next = integrator.advance(state, action.force, action.stiffness_modulation,
                                             thermal(thermal_rng), &v_full);
    if (!std::isfinite(next.x) || !std::isfinite(next.v)) {
      throw SimulationFault(n, "non-finite state");
    }

    if (n % config.record_stride == 0) {
      trace.t.push_back(state.t);
      trace.x.push_back(state.x);
      trace.v.push_back(v_full);
      trace.x_measured.push_back(measured_sum / static_cast<double>(measured_count));
      measured_sum = 0.0;
      measured_count = 0;
      trace.feedback.push_back(action.signal);
      if (!probe_buf.empty()) {
        controller.probe(probe_buf);
        for (std::size_t k = 0; k < probe_buf.size(); ++k) trace.probes[k].push_back(probe_buf[k]);
      }
    }
    // Keep t an exact multiple of dt so long runs do not accumulate round-off.
    state = {next.x, next.v, static_cast<double>(n + 1) * dt};
  }
  return trace;
}

}  // namespace levcool
