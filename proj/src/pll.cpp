#include "levcool/pll.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "levcool/errors.hpp"
#include "levcool/units.hpp"

namespace levcool {
namespace {

double b3db_factor(double zeta) {
  const double a = 2.0 * zeta * zeta + 1.0;
  return std::sqrt(a + std::sqrt(a * a + 1.0));
}

double wrap(double phase) { return std::remainder(phase, kTwoPi); }

}  // namespace

double pll_b3db(double omega_n, double zeta) { return omega_n * b3db_factor(zeta); }

double pll_omega_n_for_b3db(double b3db, double zeta) { return b3db / b3db_factor(zeta); }

double pll_noise_bandwidth_hz(double omega_n, double zeta) {
  return 0.5 * rad_to_hz(omega_n) * (zeta + 1.0 / (4.0 * zeta));
}

double snr_loop(double signal_variance, double noise_psd, double noise_bandwidth_hz) {
  if (noise_psd <= 0.0) return std::numeric_limits<double>::infinity();
  return signal_variance / (2.0 * noise_bandwidth_hz * noise_psd);
}

PllConfig PllConfig::from_bandwidth(double b3db, double zeta, double nco_center,
                                    double modulation_depth) {
  PllConfig c;
  c.zeta = zeta;
  c.omega_n = pll_omega_n_for_b3db(b3db, zeta);
  c.nco_center = nco_center;
  c.modulation_depth = modulation_depth;
  return c;
}

void PllConfig::validate() const {
  ProblemList p;
  p.require(zeta > 0.0, "controller.zeta must be > 0");
  p.require(omega_n > 0.0, "controller.omega_n must be > 0");
  p.require(quad_bandwidth >= 0.0, "controller.quad_bandwidth must be >= 0");
  p.require(modulation_depth >= 0.0, "controller.modulation_depth must be >= 0");
  p.require(modulation_cap > 0.0 && modulation_cap <= 1.0,
            "controller.modulation_cap must lie in (0, 1]");
  p.require(modulation_depth <= modulation_cap,
            "controller.modulation_depth exceeds modulation_cap");
  p.require(modulation_depth < 1.0, "controller.modulation_depth must be < 1");
  p.require(nco_center > 0.0, "controller.nco_center must be > 0");
  if (range_limit) p.require(*range_limit > 0.0, "controller.range_limit must be > 0");
  p.throw_if_any();
}

Pll::Pll(const PllConfig& config, double dt, double noise_psd)
    : config_(config), dt_(dt), noise_psd_(noise_psd) {
  config_.validate();
  if (dt <= 0.0) throw ValidationError("pll dt must be > 0");
  alpha_ = 1.0 - std::exp(-config_.effective_quad_bandwidth() * dt);
  metric_beta_ = 1.0 - std::exp(-0.1 * config_.b3db() * dt);
  kp_ = config_.tau2() / config_.tau1();
  ki_ = 1.0 / config_.tau1();
  noise_bw_hz_ = config_.noise_bandwidth_hz();
  state_.freq = config_.nco_center;
}

double Pll::detect(double sample) {
  auto& s = state_;
  const double c = std::cos(s.theta);
  const double sn = std::sin(s.theta);
  s.x1 += alpha_ * (sample * c - s.x1);
  s.x2 += alpha_ * (s.x1 - s.x2);
  s.y1 += alpha_ * (sample * sn - s.y1);
  s.y2 += alpha_ * (s.y1 - s.y2);

  s.signal_variance = 2.0 * (s.x2 * s.x2 + s.y2 * s.y2);
  s.snr = snr_loop(s.signal_variance, noise_psd_, noise_bw_hz_);

  if (s.x2 == 0.0 && s.y2 == 0.0) return s.error;

  const double raw = -std::atan2(s.y2, s.x2);
  if (!config_.unwrap_error) {
    s.error = raw;
    s.has_error = true;
  } else if (s.has_error) {
    s.error += wrap(raw - s.raw_error);
  } else {
    s.error = raw;
    s.has_error = true;
  }
  s.raw_error = raw;
  s.error_variance += metric_beta_ * (raw * raw - s.error_variance);
  return s.error;
}

double Pll::advance(double phase_error) {
  auto& s = state_;
  const double center = config_.nco_center;
  s.integrator += ki_ * phase_error * dt_;
  double offset = kp_ * phase_error + s.integrator;
  if (config_.range_limit) {
    const double lim = *config_.range_limit;
    s.integrator = std::clamp(s.integrator, -lim, lim);
    offset = std::clamp(offset, -lim, lim);
  }
  s.freq = center + offset;
  s.theta += s.freq * dt_;
  return s.theta;
}

double Pll::modulation() const {
  return config_.modulation_depth * std::sin(2.0 * state_.theta + config_.feedback_phase);
}

PllController::PllController(const PllConfig& config, double dt, double noise_psd)
    : pll_(config, dt, noise_psd) {}

ControlAction PllController::update(double x_measured, double t) {
  t_ = t;
  const double error = pll_.detect(x_measured);
  const double mod = pll_.modulation();
  pll_.advance(error);
  return {0.0, mod, mod};
}

std::vector<std::string> PllController::probe_names() const {
  return {"theta_o", "f_nco_hz", "phase_error", "snr_l"};
}

void PllController::probe(std::span<double> out) const {
  const auto& s = pll_.state();
  // After update() the NCO has advanced to t + dt.
  out[0] = s.theta - pll_.config().nco_center * (t_ + pll_.dt());
  out[1] = rad_to_hz(s.freq);
  out[2] = s.raw_error;
  out[3] = s.snr;
}

}  // namespace levcool
