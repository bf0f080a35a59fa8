#include "levcool/velocity_feedback.hpp"

#include <cmath>

#include "levcool/errors.hpp"
#include "levcool/units.hpp"

namespace levcool {

Biquad Biquad::lowpass_critical(double cutoff_hz, double dt) {
  // Analog prototype p^2/(s+p)^2 is -3 dB at p*sqrt(sqrt(2)-1).
  const double wc = hz_to_rad(cutoff_hz);
  const double p = wc / std::sqrt(std::sqrt(2.0) - 1.0);
  const double k = wc / std::tan(0.5 * wc * dt);  // prewarp at the cutoff
  const double d = k + p;
  const double r = (p - k) / d;
  const double g = (p / d) * (p / d);
  return Biquad(g, 2.0 * g, g, 2.0 * r, r * r);
}

Biquad Biquad::bandpass(double center_hz, double width_hz, double dt) {
  const double w0 = hz_to_rad(center_hz) * dt;
  const double q = center_hz / width_hz;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  return Biquad(alpha / a0, 0.0, -alpha / a0, -2.0 * std::cos(w0) / a0, (1.0 - alpha) / a0);
}

std::complex<double> Biquad::response(double omega, double dt) const {
  const std::complex<double> z1 = std::polar(1.0, -omega * dt);
  const std::complex<double> z2 = z1 * z1;
  return (b0_ + b1_ * z1 + b2_ * z2) / (1.0 + a1_ * z1 + a2_ * z2);
}

void VelocityDampingConfig::validate(double dt) const {
  ProblemList p;
  p.require(gamma_fb >= 0.0, "controller.gamma_fb must be >= 0");
  if (method == VelocityMethod::filter) {
    p.require(lowpass_cutoff_hz > 0.0, "controller.lowpass_cutoff_hz must be > 0");
    if (dt > 0.0) {
      p.require(lowpass_cutoff_hz < 0.5 / dt, "controller.lowpass_cutoff_hz must be below Nyquist");
    }
  } else {
    p.require(omega0_assumed > 0.0, "controller.omega0_assumed must be > 0 for the delayed method");
  }
  if (bandpass) {
    p.require(bandpass->center_hz > 0.0, "controller.bandpass.center_hz must be > 0");
    p.require(bandpass->width_hz > 0.0, "controller.bandpass.width_hz must be > 0");
  }
  p.throw_if_any();
}

std::complex<double> wiener_response(double omega, double noise_psd, double signal_psd) {
  if (!(signal_psd > 0.0)) throw ValidationError("wiener_response needs S_xx > 0");
  const std::complex<double> differentiator(0.0, -omega);
  return differentiator / (1.0 + noise_psd / signal_psd);
}

FilterVelocityEstimator::FilterVelocityEstimator(double dt, double lowpass_cutoff_hz,
                                                 std::optional<BandpassSpec> bandpass)
    : dt_(dt), lowpass_(Biquad::lowpass_critical(lowpass_cutoff_hz, dt)) {
  if (bandpass) bandpass_ = Biquad::bandpass(bandpass->center_hz, bandpass->width_hz, dt);
}

double FilterVelocityEstimator::update(double x_measured) {
  const double x = bandpass_ ? bandpass_->process(x_measured) : x_measured;
  // The first sample has nothing to difference against.
  const double diff = primed_ ? (x - prev_) / dt_ : 0.0;
  prev_ = x;
  primed_ = true;
  return lowpass_.process(diff);
}

void FilterVelocityEstimator::reset() {
  lowpass_.reset();
  if (bandpass_) bandpass_->reset();
  prev_ = 0.0;
  primed_ = false;
}

std::complex<double> FilterVelocityEstimator::response(double omega) const {
  const std::complex<double> z1 = std::polar(1.0, -omega * dt_);
  std::complex<double> h = (1.0 - z1) / dt_ * lowpass_.response(omega, dt_);
  if (bandpass_) h *= bandpass_->response(omega, dt_);
  return h;
}

DelayVelocityEstimator::DelayVelocityEstimator(double dt, double omega0_assumed, bool fractional,
                                               std::optional<BandpassSpec> bandpass)
    : omega0_(omega0_assumed) {
  if (dt <= 0.0 || omega0_assumed <= 0.0) {
    throw ValidationError("delay estimator needs dt > 0 and omega0 > 0");
  }
  const double exact = kPi / (2.0 * omega0_assumed * dt);
  if (fractional) {
    whole_ = static_cast<std::size_t>(std::floor(exact));
    frac_ = exact - static_cast<double>(whole_);
    delay_ = exact;
  } else {
    whole_ = static_cast<std::size_t>(std::llround(exact));
    frac_ = 0.0;
    delay_ = static_cast<double>(whole_);
  }
  if (bandpass) bandpass_ = Biquad::bandpass(bandpass->center_hz, bandpass->width_hz, dt);
  ring_.assign(whole_ + 2, 0.0);
}

double DelayVelocityEstimator::update(double x_measured) {
  const double x = bandpass_ ? bandpass_->process(x_measured) : x_measured;
  const std::size_t n = ring_.size();
  ring_[head_] = x;
  if (filled_ < n) ++filled_;
  auto back = [&](std::size_t k) { return ring_[(head_ + n - k) % n]; };
  double delayed = 0.0;
  const std::size_t needed = whole_ + (frac_ > 0.0 ? 2 : 1);
  if (filled_ >= needed) {
    delayed = back(whole_);
    if (frac_ > 0.0) delayed = (1.0 - frac_) * delayed + frac_ * back(whole_ + 1);
  }
  head_ = (head_ + 1) % n;
  return -omega0_ * delayed;
}

void DelayVelocityEstimator::reset() {
  std::fill(ring_.begin(), ring_.end(), 0.0);
  head_ = 0;
  filled_ = 0;
  if (bandpass_) bandpass_->reset();
}

VelocityDampingController::VelocityDampingController(const VelocityDampingConfig& config,
                                                     double mass, double dt)
    : config_(config), mass_(mass) {
  config_.validate(dt);
  if (config_.method == VelocityMethod::filter) {
    filter_.emplace(dt, config_.lowpass_cutoff_hz, config_.bandpass);
  } else {
    delay_.emplace(dt, config_.omega0_assumed, config_.fractional_delay, config_.bandpass);
  }
}

ControlAction VelocityDampingController::update(double x_measured, double) {
  last_estimate_ = filter_ ? filter_->update(x_measured) : delay_->update(x_measured);
  const double force = feedback_force(last_estimate_, config_.gamma_fb, mass_);
  return {force, 0.0, force};
}

}  // namespace levcool
