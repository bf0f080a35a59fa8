#pragma once

#include <optional>

#include "levcool/controller.hpp"

namespace levcool {

/// Closed-loop 3 dB bandwidth (rad/s) of the second-order type-2 loop:
///   omega_n [2 zeta^2 + 1 + sqrt((2 zeta^2 + 1)^2 + 1)]^(1/2).
double pll_b3db(double omega_n, double zeta);
/// Inverse of pll_b3db at fixed zeta.
double pll_omega_n_for_b3db(double b3db, double zeta);
/// Loop noise bandwidth in Hz: (omega_n / 2 pi) * (zeta + 1/(4 zeta)) / 2.
/// For zeta^2 >> 1 this tends to B_3dB / (8 pi).
double pll_noise_bandwidth_hz(double omega_n, double zeta);

/// Loop SNR <x^2> / (2 B_L S_nn).
double snr_loop(double signal_variance, double noise_psd, double noise_bandwidth_hz);

struct PllConfig {
  double zeta = 5.0;
  double omega_n = 0.0;         // rad/s
  double quad_bandwidth = 0.0;  // rad/s; 0 selects 5 * B_3dB
  double modulation_depth = 0.0;  // G
  double feedback_phase = 0.0;    // rad; 0 stiffens the trap on outward motion
  double modulation_cap = 0.05;
  std::optional<double> range_limit;  // rad/s, max |f_nco - center|
  double nco_center = 0.0;            // rad/s
  /// Accumulate atan2 differences into a continuous error instead of feeding
  /// the principal value. Continuous errors make the integrator chase every
  /// cycle slip, so this is off unless explicitly requested.
  bool unwrap_error = false;

  /// Picks omega_n so the loop has the requested 3 dB bandwidth (rad/s).
  static PllConfig from_bandwidth(double b3db, double zeta, double nco_center,
                                  double modulation_depth);

  double b3db() const { return pll_b3db(omega_n, zeta); }
  double noise_bandwidth_hz() const { return pll_noise_bandwidth_hz(omega_n, zeta); }
  double effective_quad_bandwidth() const {
    return quad_bandwidth > 0.0 ? quad_bandwidth : 5.0 * b3db();
  }
  /// tau1 = K_o K_d / omega_n^2 and tau2 = 2 zeta / omega_n with K_o K_d = 1.
  double tau1() const { return 1.0 / (omega_n * omega_n); }
  double tau2() const { return 2.0 * zeta / omega_n; }

  void validate() const;
};

struct PllState {
  double theta = 0.0;  // NCO phase, rad, continuous
  double freq = 0.0;   // NCO angular frequency, rad/s
  double integrator = 0.0;  // PI integral branch, rad/s
  double x1 = 0.0, x2 = 0.0;  // in-phase smoothing stages
  double y1 = 0.0, y2 = 0.0;  // quadrature smoothing stages
  double raw_error = 0.0;  // last atan2 output
  double error = 0.0;      // phase error fed to the loop
  bool has_error = false;
  double error_variance = 0.0;  // running mean of wrapped error^2
  double signal_variance = 0.0;  // 2 (X^2 + Y^2)
  double snr = 0.0;
};

/// Digital PLL: quadrature phase detector with second-order exponential
/// smoothing, PI loop controller, NCO phase integrator and frequency-doubled
/// modulation output.
class Pll {
 public:
  Pll(const PllConfig& config, double dt, double noise_psd = 0.0);

  /// Mixes `sample` with cos/sin of the NCO phase, smooths both products and
  /// returns the phase error theta_in - theta_nco = -atan2(Y, X).
  /// An exactly zero quadrature pair holds the previous error.
  double detect(double sample);

  /// PI update followed by the NCO integrator; returns the new NCO phase.
  double advance(double phase_error);

  /// G sin(2 theta_nco + feedback_phase).
  double modulation() const;

  const PllState& state() const noexcept { return state_; }
  PllState& state() noexcept { return state_; }
  const PllConfig& config() const noexcept { return config_; }
  double dt() const noexcept { return dt_; }
  bool locked() const noexcept { return state_.snr >= 1.0; }

 private:
  PllConfig config_;
  double dt_;
  double noise_psd_;
  double alpha_;        // smoothing coefficient 1 - exp(-B_quad dt)
  double metric_beta_;  // lock-metric averaging coefficient
  double kp_;           // tau2 / tau1
  double ki_;           // 1 / tau1
  double noise_bw_hz_;
  PllState state_;
};

/// Parametric-feedback controller driven by a Pll.
class PllController final : public Controller {
 public:
  PllController(const PllConfig& config, double dt, double noise_psd);

  ControlAction update(double x_measured, double t) override;
  std::vector<std::string> probe_names() const override;
  void probe(std::span<double> out) const override;

  const Pll& pll() const noexcept { return pll_; }

 private:
  Pll pll_;
  double t_ = 0.0;
};

}  // namespace levcool
