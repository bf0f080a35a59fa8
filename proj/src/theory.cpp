#include "levcool/theory.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "levcool/errors.hpp"
#include "levcool/params.hpp"
#include "levcool/pll.hpp"
#include "levcool/units.hpp"

namespace levcool::theory {
namespace {

double require_gamma_fb(const TheoryInputs& in) {
  if (!in.gamma_fb) throw ValidationError("gamma_fb is required");
  if (*in.gamma_fb < 0.0) throw ValidationError("gamma_fb must be >= 0");
  return *in.gamma_fb;
}

double force_psd(const TheoryInputs& in) {
  return 2.0 * in.mass * in.gamma0 * kBoltzmann * in.temperature;
}

/// Integrates f over [0, cutoff], splitting around the resonance so the
/// adaptive rule sees the peak even when the linewidth is tiny.
template <class F>
double integrate_resonant(F f, double omega0, double width, double cutoff) {
  std::vector<double> cuts{0.0};
  std::vector<double> offsets{0.0};
  for (double k = 1.0; k <= 1e6; k *= 10.0) {
    offsets.push_back(k);
    offsets.push_back(-k);
  }
  std::sort(offsets.begin(), offsets.end());
  for (double k : offsets) {
    const double c = omega0 + k * width;
    if (c > cuts.back() && c < cutoff) cuts.push_back(c);
  }
  cuts.push_back(cutoff);
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, cuts[i], cuts[i + 1],
                                                                           15, 1e-9);
  }
  return total;
}

}  // namespace

void TheoryInputs::validate() const {
  ProblemList p;
  p.require(mass > 0.0, "mass must be > 0");
  p.require(omega0 > 0.0, "omega0 must be > 0");
  p.require(gamma0 >= 0.0, "gamma0 must be >= 0");
  p.require(temperature > 0.0, "temperature must be > 0");
  p.require(noise_psd >= 0.0, "noise_psd must be >= 0");
  if (gamma_fb) p.require(*gamma_fb >= 0.0, "gamma_fb must be >= 0");
  if (modulation_depth) p.require(*modulation_depth >= 0.0, "modulation_depth must be >= 0");
  if (zeta) p.require(*zeta > 0.0, "zeta must be > 0");
  if (omega_n) p.require(*omega_n > 0.0, "omega_n must be > 0");
  p.throw_if_any();
}

TheoryInputs reference_inputs() {
  TheoryInputs in;
  in.mass = ParticleParams{}.mass();
  in.omega0 = hz_to_rad(277.0);
  in.gamma0 = hz_to_rad(780e-6);
  in.temperature = 293.0;
  in.noise_psd = 1.5e-17;
  return in;
}

VdTemperature vd_temperature_terms(const TheoryInputs& in) {
  in.validate();
  const double g = require_gamma_fb(in);
  const double total_damping = in.gamma0 + g;
  VdTemperature t{};
  t.thermal = in.temperature * in.gamma0 / total_damping;
  t.noise = 0.5 * in.mass * in.omega0 * in.omega0 / kBoltzmann * g * g / total_damping *
            in.noise_psd;
  t.total = t.thermal + t.noise;
  return t;
}

double vd_temperature(const TheoryInputs& in) { return vd_temperature_terms(in).total; }

VdOptimum vd_optimum(const TheoryInputs& in) {
  in.validate();
  const double stiffness = in.mass * in.omega0 * in.omega0;
  VdOptimum o{};
  o.gamma_fb = std::sqrt(2.0 * in.gamma0 * kBoltzmann * in.temperature / (in.noise_psd * stiffness));
  o.t_min = std::sqrt(2.0 * in.noise_psd * stiffness * in.gamma0 * in.temperature / kBoltzmann);
  return o;
}

PllLimits pll_limits(const TheoryInputs& in) {
  in.validate();
  if (!in.zeta || !in.omega_n) throw ValidationError("pll_limits needs zeta and omega_n");
  PllLimits l{};
  l.b3db = pll_b3db(*in.omega_n, *in.zeta);
  l.g_lim = 2.0 * l.b3db / in.omega0;
  l.t_lim1 = in.temperature * in.gamma0 / l.b3db;
  l.b_l_hz = pll_noise_bandwidth_hz(*in.omega_n, *in.zeta);
  l.t_lim2 = in.mass * in.omega0 * in.omega0 / kBoltzmann * 2.0 * l.b_l_hz * in.noise_psd;
  return l;
}

PllLimits pll_limits_at_bandwidth(const TheoryInputs& in, double b3db) {
  in.validate();
  if (!(b3db > 0.0)) throw ValidationError("bandwidth must be > 0");
  PllLimits l{};
  l.b3db = b3db;
  l.g_lim = 2.0 * b3db / in.omega0;
  l.t_lim1 = in.temperature * in.gamma0 / b3db;
  l.b_l_hz = b3db / (8.0 * kPi);
  l.t_lim2 = in.mass * in.omega0 * in.omega0 / kBoltzmann * 2.0 * l.b_l_hz * in.noise_psd;
  return l;
}

PllOptimum pll_optimum(const TheoryInputs& in) {
  in.validate();
  const double stiffness = in.mass * in.omega0 * in.omega0;
  PllOptimum o{};
  o.b3db = std::sqrt(4.0 * kPi * in.gamma0 * kBoltzmann * in.temperature / (in.noise_psd * stiffness));
  o.t_min = std::sqrt(in.noise_psd * stiffness * in.gamma0 * in.temperature / (4.0 * kPi * kBoltzmann));
  return o;
}

double effective_temperature(Scheme scheme, const TheoryInputs& in) {
  in.validate();
  switch (scheme) {
    case Scheme::thermal:
      return in.temperature;
    case Scheme::velocity_damping: {
      const double g = require_gamma_fb(in);
      return (2.0 * in.gamma0 * kBoltzmann * in.temperature +
              in.mass * in.omega0 * in.omega0 * in.noise_psd * g * g) /
             (2.0 * kBoltzmann * (in.gamma0 + g));
    }
    case Scheme::pll: {
      if (!in.modulation_depth) throw ValidationError("modulation_depth is required");
      if (in.gamma0 <= 0.0) throw ValidationError("pll energy distribution needs gamma0 > 0");
      return in.temperature / (1.0 + *in.modulation_depth * in.omega0 / (2.0 * in.gamma0));
    }
  }
  throw ValidationError("unknown scheme");
}

double energy_pdf(Scheme scheme, const TheoryInputs& in, double energy) {
  if (energy < 0.0) throw ValidationError("energy must be >= 0");
  const double kt = kBoltzmann * effective_temperature(scheme, in);
  return std::exp(-energy / kt) / kt;
}

double position_psd(const TheoryInputs& in, double gamma_fb, double omega) {
  const double g = in.gamma0 + gamma_fb;
  const double detune = in.omega0 * in.omega0 - omega * omega;
  const double denom = in.mass * in.mass * (detune * detune + g * g * omega * omega);
  const double drive = force_psd(in) +
                       std::pow(in.mass * omega * gamma_fb, 2) * in.noise_psd;
  return drive / denom;
}

double momentum_psd(const TheoryInputs& in, double gamma_fb, double omega) {
  return in.mass * in.mass * omega * omega * position_psd(in, gamma_fb, omega);
}

PhaseSpaceVariance variance_xp(const TheoryInputs& in, double gamma_fb, double cutoff) {
  in.validate();
  if (!(cutoff > 0.0)) throw ValidationError("integration cutoff must be > 0");
  if (gamma_fb < 0.0) throw ValidationError("gamma_fb must be >= 0");
  const double width = std::max(in.gamma0 + gamma_fb, 1e-9 * in.omega0);
  // Spectra are even in omega: integrate one side and double, per d omega / 2 pi.
  auto sxx = [&](double w) { return position_psd(in, gamma_fb, w); };
  auto spp = [&](double w) { return momentum_psd(in, gamma_fb, w); };
  PhaseSpaceVariance v{};
  v.x_var = 2.0 * integrate_resonant(sxx, in.omega0, width, cutoff) / kTwoPi;
  v.p_var = 2.0 * integrate_resonant(spp, in.omega0, width, cutoff) / kTwoPi;
  return v;
}

double position_variance_closed_form(const TheoryInputs& in, double gamma_fb) {
  in.validate();
  const double g = in.gamma0 + gamma_fb;
  return kBoltzmann * in.temperature * in.gamma0 / (in.mass * in.omega0 * in.omega0 * g) +
         gamma_fb * gamma_fb * in.noise_psd / (2.0 * g);
}

TrapFrequencies paul_trap_frequencies(const TrapParams& trap) {
  ProblemList p;
  p.require(trap.r0 > 0.0 && trap.z0 > 0.0, "trap r0 and z0 must be > 0");
  p.require(trap.kappa > 0.0 && trap.eta > 0.0, "trap kappa and eta must be > 0");
  p.require(trap.omega_rf > 0.0, "trap omega_rf must be > 0");
  p.require(trap.charge_to_mass > 0.0, "trap charge_to_mass must be > 0");
  p.throw_if_any();

  const double wrf2 = trap.omega_rf * trap.omega_rf;
  TrapFrequencies f{};
  f.q_x = 2.0 * trap.charge_to_mass * trap.v0 * trap.eta / (wrf2 * trap.r0 * trap.r0);
  f.a_x = -4.0 * trap.charge_to_mass * trap.u0 * trap.kappa / (wrf2 * trap.z0 * trap.z0);
  f.a_z = -2.0 * f.a_x;

  const double radial = f.a_x + 0.5 * f.q_x * f.q_x;
  if (radial < 0.0 || f.a_z < 0.0) {
    throw ValidationError("unstable trap configuration: negative secular frequency squared");
  }
  f.omega_x = 0.5 * trap.omega_rf * std::sqrt(radial);
  f.omega_y = f.omega_x;
  f.omega_z = 0.5 * trap.omega_rf * std::sqrt(f.a_z);
  f.stability_ok = std::abs(f.a_x) < 0.1 && std::abs(f.a_z) < 0.1 && f.q_x * f.q_x < 0.1;
  return f;
}

}  // namespace levcool::theory
