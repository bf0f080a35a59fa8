#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <vector>

#include "levcool/controller.hpp"

namespace levcool {

/// Direct-form-II-transposed second-order section.
class Biquad {
 public:
  Biquad() = default;
  Biquad(double b0, double b1, double b2, double a1, double a2)
      : b0_(b0), b1_(b1), b2_(b2), a1_(a1), a2_(a2) {}

  /// Critically damped second-order low-pass, bilinear transform prewarped so
  /// the response is exactly -3 dB at `cutoff_hz`.
  static Biquad lowpass_critical(double cutoff_hz, double dt);
  /// Unity-peak band-pass centred on `center_hz` with -3 dB width `width_hz`.
  static Biquad bandpass(double center_hz, double width_hz, double dt);

  double process(double in) {
    const double out = b0_ * in + z1_;
    z1_ = b1_ * in - a1_ * out + z2_;
    z2_ = b2_ * in - a2_ * out;
    return out;
  }
  void reset() { z1_ = z2_ = 0.0; }

  /// H(e^{i omega dt}).
  std::complex<double> response(double omega, double dt) const;

 private:
  double b0_ = 1.0, b1_ = 0.0, b2_ = 0.0, a1_ = 0.0, a2_ = 0.0;
  double z1_ = 0.0, z2_ = 0.0;
};

enum class VelocityMethod { filter, delayed };

struct BandpassSpec {
  double center_hz = 0.0;
  double width_hz = 0.0;
};

struct VelocityDampingConfig {
  VelocityMethod method = VelocityMethod::filter;
  double gamma_fb = 0.0;              // rad/s
  double lowpass_cutoff_hz = 8000.0;  // filter method
  std::optional<BandpassSpec> bandpass;
  double omega0_assumed = 0.0;  // rad/s, delayed method
  /// Delayed method: interpolate between samples instead of rounding the
  /// quarter-period delay to an integer number of samples.
  bool fractional_delay = false;

  void validate(double dt) const;
};

/// Reference (non-causal) optimum velocity estimator
///   W(omega) = -i omega / (1 + S_nn / S_xx(omega)).
std::complex<double> wiener_response(double omega, double noise_psd, double signal_psd);

/// Backward-difference differentiator followed by the low-pass, with an
/// optional band-pass in front.
class FilterVelocityEstimator {
 public:
  FilterVelocityEstimator(double dt, double lowpass_cutoff_hz,
                          std::optional<BandpassSpec> bandpass = std::nullopt);

  double update(double x_measured);
  void reset();

  /// Discrete frequency response from measured position to velocity estimate.
  std::complex<double> response(double omega) const;

 private:
  double dt_;
  Biquad lowpass_;
  std::optional<Biquad> bandpass_;
  double prev_ = 0.0;
  bool primed_ = false;
};

/// v(t) ~ -omega0 x(t - pi/(2 omega0)), valid for narrow-band motion near omega0.
/// Outputs 0 until the delay line has filled.
class DelayVelocityEstimator {
 public:
  DelayVelocityEstimator(double dt, double omega0_assumed, bool fractional = false,
                         std::optional<BandpassSpec> bandpass = std::nullopt);

  double update(double x_measured);
  void reset();

  /// Delay in samples actually applied.
  double delay_samples() const noexcept { return delay_; }

 private:
  double omega0_;
  double delay_;
  std::size_t whole_;
  double frac_;
  std::optional<Biquad> bandpass_;
  std::vector<double> ring_;
  std::size_t head_ = 0;
  std::size_t filled_ = 0;
};

/// -m gamma_fb v_hat.
inline double feedback_force(double v_hat, double gamma_fb, double mass) {
  return -mass * gamma_fb * v_hat;
}

/// Velocity-damping (cold damping) controller.
class VelocityDampingController final : public Controller {
 public:
  VelocityDampingController(const VelocityDampingConfig& config, double mass, double dt);

  ControlAction update(double x_measured, double t) override;
  std::vector<std::string> probe_names() const override { return {"v_estimate"}; }
  void probe(std::span<double> out) const override { out[0] = last_estimate_; }

  const VelocityDampingConfig& config() const noexcept { return config_; }

 private:
  VelocityDampingConfig config_;
  double mass_;
  std::optional<FilterVelocityEstimator> filter_;
  std::optional<DelayVelocityEstimator> delay_;
  double last_estimate_ = 0.0;
};

}  // namespace levcool
