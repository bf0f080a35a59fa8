#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "levcool/trace.hpp"

namespace levcool {

class InsufficientData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Window { hann, rectangular };

struct SegmentConfig {
  std::size_t length = 0;  // samples per segment; 0 picks a power of two ~ n/8
  double overlap = 0.5;
  Window window = Window::hann;
};

/// One-sided PSD: sum(psd) * resolution equals the series variance. A white
/// sequence of variance s^2 at spacing dt therefore sits at 2 s^2 dt.
struct Spectrum {
  std::vector<double> freqs;  // Hz
  std::vector<double> psd;    // units^2 / Hz
  SegmentConfig segments;
  std::size_t n_segments = 0;

  double resolution() const { return freqs.size() > 1 ? freqs[1] - freqs[0] : 0.0; }
  /// Sum of psd * df over bins with f_lo <= f <= f_hi.
  double integrate(double f_lo, double f_hi) const;
  /// Mean psd over bins with f_lo <= f <= f_hi.
  double mean_level(double f_lo, double f_hi) const;
};

/// Welch estimate with mean-removed segments.
Spectrum welch_psd(std::span<const double> series, double sample_rate, SegmentConfig config = {});

struct LorentzianGuess {
  double center_hz = 0.0;
  double linewidth_hz = 0.0;
  double area = 0.0;   // 0 takes the integrated excess over the floor
  double floor = 0.0;  // 0 takes the median psd
};

/// S(f) = area * 4 gamma w0^2 / ((w0^2 - w^2)^2 + gamma^2 w^2) + floor, with
/// w = 2 pi f and gamma = 2 pi linewidth. `area` integrates to the variance.
struct LorentzianFit {
  double center_hz = 0.0;
  double linewidth_hz = 0.0;
  double area = 0.0;
  double floor = 0.0;
  bool converged = false;
  int iterations = 0;

  double evaluate(double f_hz) const;
};

/// Least-squares fit of the susceptibility profile in log space. `f_lo` and
/// `f_hi` restrict the fitted band (defaults: center +/- 25 guessed widths).
/// Throws ValidationError if the peak is not at least 3x above the floor.
LorentzianFit lorentzian_fit(const Spectrum& spectrum, const LorentzianGuess& guess,
                             std::optional<double> f_lo = std::nullopt,
                             std::optional<double> f_hi = std::nullopt);

enum class TemperatureMode { x_only, full };

struct TemperatureEstimate {
  double t_x = 0.0;     // m omega0^2 <x^2> / k_B
  double t_full = 0.0;  // (m omega0^2 <x^2> + <p^2>/m) / (2 k_B)
  double stderr_x = 0.0;
  double stderr_full = 0.0;
  std::size_t blocks = 0;

  double value(TemperatureMode mode) const { return mode == TemperatureMode::full ? t_full : t_x; }
  double error(TemperatureMode mode) const {
    return mode == TemperatureMode::full ? stderr_full : stderr_x;
  }
};

/// CoM temperature of a (transient-free) view. Errors come from blocking over
/// stretches of 10 / decorrelation_rate seconds (rate in rad/s, typically the
/// closed-loop linewidth).
TemperatureEstimate temperature(const TraceView& view, double mass, double omega0,
                                double decorrelation_rate);

struct EnergyDistribution {
  std::vector<double> bin_edges;  // J
  std::vector<double> counts;
  std::vector<double> pdf;  // 1/J
  double t_eff = 0.0;        // K, maximum-likelihood exponential fit
  double noise_offset = 0.0;  // J, mean energy attributed to detection noise
  std::size_t samples = 0;
  double ks_statistic = 0.0;
  double ks_threshold = 0.0;  // 1% critical value
  double ks_pvalue = 0.0;

  bool ks_pass() const { return ks_statistic < ks_threshold; }
};

struct EnergyOptions {
  std::size_t bins = 60;
  double spacing_factor = 3.0;  // sample every spacing_factor / rate seconds
  std::size_t min_samples = 10000;
};

/// Histogram and exponential fit of E = m v^2/2 + m omega0^2 x^2/2 from the
/// true coordinates, subsampled to decorrelated points.
EnergyDistribution energy_distribution(const TraceView& view, double mass, double omega0,
                                       double decorrelation_rate, EnergyOptions options = {});

/// Same from the measured position only: the signal is band-passed around
/// omega0 (width `bandwidth_hz`), the quarter-period delayed copy stands in
/// for -v/omega0, and the detection-noise energy passed by the band-pass is
/// reported as `noise_offset` and removed from `t_eff`. `t_eff` is also
/// corrected for the share of the motional line (width `decorrelation_rate`)
/// that the band-pass rejects.
EnergyDistribution measured_energy_distribution(const TraceView& view, double mass, double omega0,
                                                double noise_psd, double bandwidth_hz,
                                                double decorrelation_rate,
                                                EnergyOptions options = {});

/// Kolmogorov distribution tail Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
double kolmogorov_tail(double lambda);

}  // namespace levcool
