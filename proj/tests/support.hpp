#pragma once

// Measurement helpers shared by the unit suites and the acceptance runner.
// Everything here drives library objects with synthetic inputs and compares
// against references computed independently of the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "levcool/pll.hpp"
#include "levcool/units.hpp"

namespace levcool::testing {

/// Relative difference |a - b| / |b|.
inline double rel_diff(double a, double b) { return std::abs(a - b) / std::abs(b); }

/// Continuous-time type-2 loop driven by a phase step of size `step`:
///   theta' = kp e + I,  I' = ki e,  e = step - theta,
/// integrated with classical RK4 on a fine grid. Returns theta(t) sampled at
/// `times`.
inline std::vector<double> continuous_loop_step(double omega_n, double zeta, double step,
                                                const std::vector<double>& times) {
  const double kp = 2.0 * zeta * omega_n;
  const double ki = omega_n * omega_n;
  auto deriv = [&](const std::array<double, 2>& y) {
    const double e = step - y[0];
    return std::array<double, 2>{kp * e + y[1], ki * e};
  };
  std::vector<double> out;
  out.reserve(times.size());
  std::array<double, 2> y{0.0, 0.0};
  double t = 0.0;
  const double h = 1e-5 / std::max(1.0, omega_n / kTwoPi);
  for (double target : times) {
    while (t < target) {
      const double dt = std::min(h, target - t);
      const auto k1 = deriv(y);
      const auto k2 = deriv({y[0] + 0.5 * dt * k1[0], y[1] + 0.5 * dt * k1[1]});
      const auto k3 = deriv({y[0] + 0.5 * dt * k2[0], y[1] + 0.5 * dt * k2[1]});
      const auto k4 = deriv({y[0] + dt * k3[0], y[1] + dt * k3[1]});
      y[0] += dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
      y[1] += dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
      t += dt;
    }
    out.push_back(y[0]);
  }
  return out;
}

/// Settings for driving a Pll with a synthetic tone.
struct ToneRig {
  double dt = 1e-5;
  double carrier_hz = 5000.0;  // far above the loop so mixing ripple is tiny
  double quad_bandwidth = 1500.0;  // rad/s

  PllConfig config(double omega_n, double zeta) const {
    PllConfig c;
    c.zeta = zeta;
    c.omega_n = omega_n;
    c.quad_bandwidth = quad_bandwidth;
    c.nco_center = hz_to_rad(carrier_hz);
    return c;
  }
};

/// Feeds cos(w t + phase(t)) and returns the NCO phase relative to the
/// carrier, theta_o(t) - w t, after every sample.
inline std::vector<double> track_phase(const ToneRig& rig, Pll& pll, std::size_t n,
                                       const std::function<double(double)>& phase,
                                       double amplitude = 1.0) {
  const double w = hz_to_rad(rig.carrier_hz);
  std::vector<double> rel(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * rig.dt;
    pll.advance(pll.detect(amplitude * std::cos(w * t + phase(t))));
    rel[i] = pll.state().theta - w * (t + rig.dt);
  }
  return rel;
}

/// Largest deviation (relative to the step) between the digital loop's
/// response to a phase step and the continuous second-order reference.
inline double step_response_error(double omega_n, double zeta, const ToneRig& rig = {}) {
  constexpr double kStep = 0.3;
  Pll pll(rig.config(omega_n, zeta), rig.dt);
  const double settle = 0.2;  // s with zero phase so the smoothing is primed
  const double span = 12.0 / (zeta * omega_n) + 8.0 / omega_n;
  const auto n_settle = static_cast<std::size_t>(settle / rig.dt);
  const auto n = n_settle + static_cast<std::size_t>(span / rig.dt);
  const auto rel = track_phase(rig, pll, n, [&](double t) { return t >= settle ? kStep : 0.0; });

  std::vector<double> times;
  std::vector<double> sim;
  const double base = rel[n_settle - 1];
  for (std::size_t i = n_settle; i < n; i += 50) {
    times.push_back(static_cast<double>(i + 1) * rig.dt - settle);
    sim.push_back(rel[i] - base);
  }
  const auto ref = continuous_loop_step(omega_n, zeta, kStep, times);
  double worst = 0.0;
  for (std::size_t k = 0; k < sim.size(); ++k) worst = std::max(worst, std::abs(sim[k] - ref[k]));
  return worst / kStep;
}

/// |H(i wm)| of the closed phase loop, measured by phase-modulating the tone
/// with a small sinusoid and demodulating the NCO phase at wm.
inline double measured_phase_gain(double omega_n, double zeta, double wm, const ToneRig& rig = {}) {
  constexpr double kDepth = 0.05;
  Pll pll(rig.config(omega_n, zeta), rig.dt);
  const double settle = 10.0 / (zeta * omega_n) + 6.0 / omega_n + 5.0 * kTwoPi / wm;
  const double periods = std::max(8.0, std::ceil(2.0 * wm / omega_n));
  const double window = periods * kTwoPi / wm;
  const auto n_settle = static_cast<std::size_t>(settle / rig.dt);
  const auto n_win = static_cast<std::size_t>(window / rig.dt);
  const auto rel = track_phase(rig, pll, n_settle + n_win,
                               [&](double t) { return kDepth * std::sin(wm * t); });
  std::complex<double> acc = 0.0;
  for (std::size_t i = n_settle; i < n_settle + n_win; ++i) {
    const double t = static_cast<double>(i + 1) * rig.dt;
    acc += rel[i] * std::exp(std::complex<double>(0.0, -wm * t));
  }
  return 2.0 * std::abs(acc) / static_cast<double>(n_win) / kDepth;
}

/// Modulation frequency (rad/s) where the measured |H| falls to 1/sqrt(2),
/// found by bisection in log frequency above omega_n.
inline double measured_b3db(double omega_n, double zeta, const ToneRig& rig = {}) {
  const double target = 1.0 / std::sqrt(2.0);
  double lo = 0.5 * omega_n;
  double hi = 20.0 * omega_n * std::max(1.0, zeta);
  for (int it = 0; it < 14; ++it) {
    const double mid = std::sqrt(lo * hi);
    if (measured_phase_gain(omega_n, zeta, mid, rig) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return std::sqrt(lo * hi);
}

}  // namespace levcool::testing
