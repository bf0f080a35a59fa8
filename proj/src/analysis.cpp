#include "levcool/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>

#include <fftw3.h>
#include <Eigen/Core>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "levcool/errors.hpp"
#include "levcool/units.hpp"
#include "levcool/velocity_feedback.hpp"

namespace levcool {
namespace {

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

std::size_t default_segment_length(std::size_t n) {
  std::size_t len = 1;
  while (len * 2 <= std::max<std::size_t>(n / 8, 16)) len *= 2;
  return len;
}

double mean_of(std::span<const double> s) {
  return s.empty() ? 0.0 : std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
}

struct LorentzFunctor {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  std::vector<double> f;
  std::vector<double> log_psd;
  bool fit_floor = true;

  int inputs() const { return fit_floor ? 4 : 3; }
  int values() const { return static_cast<int>(f.size()); }

  static double model(const Eigen::VectorXd& p, bool fit_floor, double fhz) {
    const double w0 = hz_to_rad(p[0]);
    const double g = hz_to_rad(std::exp(p[1]));
    const double area = std::exp(p[2]);
    const double w = hz_to_rad(fhz);
    const double d = w0 * w0 - w * w;
    double s = area * 4.0 * g * w0 * w0 / (d * d + g * g * w * w);
    if (fit_floor) s += std::exp(p[3]);
    return s;
  }

  int operator()(const Eigen::VectorXd& p, Eigen::VectorXd& r) const {
    for (std::size_t i = 0; i < f.size(); ++i) {
      r[static_cast<Eigen::Index>(i)] = std::log(model(p, fit_floor, f[i])) - log_psd[i];
    }
    return 0;
  }
};

/// Sum of squares of a biquad's impulse response (noise gain).
double noise_gain(Biquad filter, std::size_t length) {
  filter.reset();
  double sum = 0.0;
  for (std::size_t i = 0; i < length; ++i) {
    const double h = filter.process(i == 0 ? 1.0 : 0.0);
    sum += h * h;
  }
  return sum;
}

/// Fills histogram, KS and pdf given energies and a reference CDF.
template <class Cdf>
void summarise(EnergyDistribution& out, std::vector<double> energies, std::size_t bins, Cdf cdf) {
  const std::size_t n = energies.size();
  std::sort(energies.begin(), energies.end());
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = cdf(energies[i]);
    d = std::max({d, std::abs(f - static_cast<double>(i) / static_cast<double>(n)),
                  std::abs(static_cast<double>(i + 1) / static_cast<double>(n) - f)});
  }
  const double sn = std::sqrt(static_cast<double>(n));
  out.ks_statistic = d;
  out.ks_threshold = 1.6276 / sn;
  out.ks_pvalue = kolmogorov_tail((sn + 0.12 + 0.11 / sn) * d);

  const double top = energies[std::min(n - 1, static_cast<std::size_t>(0.999 * static_cast<double>(n)))];
  const double width = top / static_cast<double>(bins);
  out.bin_edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) out.bin_edges[b] = width * static_cast<double>(b);
  out.counts.assign(bins, 0.0);
  for (double e : energies) {
    const auto b = static_cast<std::size_t>(e / width);
    if (b < bins) out.counts[b] += 1.0;
  }
  out.pdf.resize(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out.pdf[b] = out.counts[b] / (static_cast<double>(n) * width);
  }
}

std::size_t spacing_rows(double dt, double rate, double factor) {
  if (!(rate > 0.0)) throw ValidationError("decorrelation rate must be > 0");
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(factor / (rate * dt))));
}

}  // namespace

double Spectrum::integrate(double f_lo, double f_hi) const {
  double sum = 0.0;
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    if (freqs[i] >= f_lo && freqs[i] <= f_hi) sum += psd[i];
  }
  return sum * resolution();
}

double Spectrum::mean_level(double f_lo, double f_hi) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    if (freqs[i] >= f_lo && freqs[i] <= f_hi) {
      sum += psd[i];
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

Spectrum welch_psd(std::span<const double> series, double sample_rate, SegmentConfig config) {
  if (!(sample_rate > 0.0)) throw ValidationError("sample rate must be > 0");
  if (!(config.overlap >= 0.0 && config.overlap < 1.0)) {
    throw ValidationError("segment overlap must lie in [0, 1)");
  }
  const std::size_t n = series.size();
  const std::size_t len = config.length ? config.length : default_segment_length(n);
  config.length = len;
  if (len < 4 || n < 2 * len) {
    throw InsufficientData("welch_psd needs at least two segments of " + std::to_string(len) +
                           " samples, got " + std::to_string(n));
  }
  const auto hop = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(len) * (1.0 - config.overlap))));

  std::vector<double> window(len, 1.0);
  if (config.window == Window::hann) {
    for (std::size_t i = 0; i < len; ++i) {
      window[i] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(len));
    }
  }
  const double wsum2 = std::inner_product(window.begin(), window.end(), window.begin(), 0.0);

  const std::size_t nbins = len / 2 + 1;
  double* in = fftw_alloc_real(len);
  fftw_complex* out = fftw_alloc_complex(nbins);
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(len), in, out, FFTW_ESTIMATE);
  }

  Spectrum spec;
  spec.segments = config;
  spec.psd.assign(nbins, 0.0);
  for (std::size_t start = 0; start + len <= n; start += hop) {
    const auto seg = series.subspan(start, len);
    const double m = mean_of(seg);
    for (std::size_t i = 0; i < len; ++i) in[i] = (seg[i] - m) * window[i];
    fftw_execute(plan);
    for (std::size_t k = 0; k < nbins; ++k) {
      spec.psd[k] += out[k][0] * out[k][0] + out[k][1] * out[k][1];
    }
    ++spec.n_segments;
  }
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);

  const double scale = 1.0 / (sample_rate * wsum2 * static_cast<double>(spec.n_segments));
  spec.freqs.resize(nbins);
  for (std::size_t k = 0; k < nbins; ++k) {
    spec.freqs[k] = static_cast<double>(k) * sample_rate / static_cast<double>(len);
    const bool edge = k == 0 || (len % 2 == 0 && k == nbins - 1);
    spec.psd[k] *= scale * (edge ? 1.0 : 2.0);
  }
  return spec;
}

double LorentzianFit::evaluate(double f_hz) const {
  Eigen::VectorXd p(4);
  p << center_hz, std::log(linewidth_hz), std::log(area), std::log(std::max(floor, 1e-300));
  return LorentzFunctor::model(p, floor > 0.0, f_hz);
}

LorentzianFit lorentzian_fit(const Spectrum& spectrum, const LorentzianGuess& guess,
                             std::optional<double> f_lo, std::optional<double> f_hi) {
  if (!(guess.center_hz > 0.0 && guess.linewidth_hz > 0.0)) {
    throw ValidationError("lorentzian_fit needs positive center and linewidth guesses");
  }
  const double lo = f_lo.value_or(std::max(0.0, guess.center_hz - 25.0 * guess.linewidth_hz));
  const double hi = f_hi.value_or(guess.center_hz + 25.0 * guess.linewidth_hz);

  LorentzFunctor fn;
  std::vector<double> band;
  double peak = 0.0;
  for (std::size_t i = 1; i < spectrum.freqs.size(); ++i) {
    const double f = spectrum.freqs[i];
    if (f < lo || f > hi || !(spectrum.psd[i] > 0.0)) continue;
    fn.f.push_back(f);
    fn.log_psd.push_back(std::log(spectrum.psd[i]));
    band.push_back(spectrum.psd[i]);
    peak = std::max(peak, spectrum.psd[i]);
  }
  if (fn.f.size() < 8) throw InsufficientData("lorentzian_fit: fewer than 8 bins in the fit band");

  std::vector<double> sorted = band;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
  const double median = sorted[sorted.size() / 2];
  const double floor0 = guess.floor > 0.0 ? guess.floor : median;
  if (peak < 3.0 * floor0) throw ValidationError("lorentzian_fit: peak SNR below 3");

  double area0 = guess.area;
  if (!(area0 > 0.0)) {
    const double df = spectrum.resolution();
    for (double s : band) area0 += std::max(0.0, s - floor0) * df;
  }
  fn.fit_floor = true;

  Eigen::VectorXd p(4);
  p << guess.center_hz, std::log(guess.linewidth_hz), std::log(std::max(area0, 1e-300)),
      std::log(floor0);
  Eigen::NumericalDiff<LorentzFunctor> numdiff(fn);
  Eigen::LevenbergMarquardt<Eigen::NumericalDiff<LorentzFunctor>> lm(numdiff);
  lm.parameters.maxfev = 4000;
  const auto status = lm.minimize(p);

  LorentzianFit fit;
  fit.center_hz = p[0];
  fit.linewidth_hz = std::exp(p[1]);
  fit.area = std::exp(p[2]);
  fit.floor = std::exp(p[3]);
  fit.iterations = static_cast<int>(lm.iter);
  using Eigen::LevenbergMarquardtSpace::Status;
  fit.converged = status != Status::ImproperInputParameters &&
                  status != Status::TooManyFunctionEvaluation && std::isfinite(fit.linewidth_hz) &&
                  std::isfinite(fit.center_hz) && fit.center_hz > 0.0;
  return fit;
}

TemperatureEstimate temperature(const TraceView& view, double mass, double omega0,
                                double decorrelation_rate) {
  if (view.empty()) throw InsufficientData("temperature: empty trace");
  if (!(decorrelation_rate > 0.0)) throw ValidationError("decorrelation rate must be > 0");
  const std::size_t n = view.size();
  const double xm = mean_of(view.x);
  const double vm = mean_of(view.v);
  const double kx = mass * omega0 * omega0 / kBoltzmann;
  const double kv = mass / kBoltzmann;

  auto block_stats = [&](std::size_t a, std::size_t b, double& tx, double& tv) {
    double sx = 0.0, sv = 0.0;
    for (std::size_t i = a; i < b; ++i) {
      const double dx = view.x[i] - xm;
      const double dv = view.v[i] - vm;
      sx += dx * dx;
      sv += dv * dv;
    }
    const double cnt = static_cast<double>(b - a);
    tx = kx * sx / cnt;
    tv = kv * sv / cnt;
  };

  TemperatureEstimate est;
  double tv_all = 0.0;
  block_stats(0, n, est.t_x, tv_all);
  est.t_full = 0.5 * (est.t_x + tv_all);

  const auto block_len = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(10.0 / (decorrelation_rate * view.dt))));
  const std::size_t nb = n / block_len;
  est.blocks = nb;
  if (nb < 2) {
    est.stderr_x = est.stderr_full = std::numeric_limits<double>::infinity();
    return est;
  }
  std::vector<double> bx(nb), bf(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    double tx = 0.0, tv = 0.0;
    block_stats(b * block_len, (b + 1) * block_len, tx, tv);
    bx[b] = tx;
    bf[b] = 0.5 * (tx + tv);
  }
  auto sem = [nb](const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(nb);
    double s = 0.0;
    for (double a : v) s += (a - m) * (a - m);
    return std::sqrt(s / static_cast<double>(nb - 1) / static_cast<double>(nb));
  };
  est.stderr_x = sem(bx);
  est.stderr_full = sem(bf);
  return est;
}

EnergyDistribution energy_distribution(const TraceView& view, double mass, double omega0,
                                       double decorrelation_rate, EnergyOptions options) {
  const std::size_t step = spacing_rows(view.dt, decorrelation_rate, options.spacing_factor);
  const std::size_t n = view.size() / step;
  if (n < options.min_samples) {
    throw InsufficientData("energy_distribution: " + std::to_string(n) +
                           " decorrelated samples, need " + std::to_string(options.min_samples));
  }
  const double xm = mean_of(view.x);
  std::vector<double> energies;
  energies.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i * step;
    const double dx = view.x[k] - xm;
    energies.push_back(0.5 * mass * (view.v[k] * view.v[k] + omega0 * omega0 * dx * dx));
  }
  EnergyDistribution out;
  out.samples = n;
  const double mean_e = std::accumulate(energies.begin(), energies.end(), 0.0) / static_cast<double>(n);
  out.t_eff = mean_e / kBoltzmann;
  summarise(out, std::move(energies), options.bins,
            [mean_e](double e) { return 1.0 - std::exp(-e / mean_e); });
  return out;
}

EnergyDistribution measured_energy_distribution(const TraceView& view, double mass, double omega0,
                                                double noise_psd, double bandwidth_hz,
                                                double decorrelation_rate, EnergyOptions options) {
  if (!(bandwidth_hz > 0.0)) throw ValidationError("analysis bandwidth must be > 0");
  const double dt = view.dt;
  const double f0 = rad_to_hz(omega0);
  const Biquad proto = Biquad::bandpass(f0, bandwidth_hz, dt);
  Biquad bp = proto;

  const auto delay = static_cast<std::size_t>(std::llround(kPi / (2.0 * omega0 * dt)));
  std::vector<double> y(view.size());
  for (std::size_t i = 0; i < view.size(); ++i) y[i] = bp.process(view.x_measured[i]);

  // Skip the band-pass settling time before sampling.
  const auto settle = static_cast<std::size_t>(std::ceil(10.0 / (hz_to_rad(bandwidth_hz) * dt))) + delay;
  const std::size_t step = spacing_rows(dt, decorrelation_rate, options.spacing_factor);
  const std::size_t n = view.size() > settle ? (view.size() - settle) / step : 0;
  if (n < options.min_samples) {
    throw InsufficientData("measured_energy_distribution: " + std::to_string(n) +
                           " decorrelated samples, need " + std::to_string(options.min_samples));
  }
  std::vector<double> energies;
  energies.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = settle + i * step;
    energies.push_back(0.5 * mass * omega0 * omega0 * (y[k] * y[k] + y[k - delay] * y[k - delay]));
  }
  const auto gain_len = static_cast<std::size_t>(std::ceil(50.0 / (hz_to_rad(bandwidth_hz) * dt)));
  const double noise_var = noise_psd / dt * noise_gain(proto, gain_len);

  EnergyDistribution out;
  out.samples = n;
  out.noise_offset = mass * omega0 * omega0 * noise_var;
  const double mean_e = std::accumulate(energies.begin(), energies.end(), 0.0) / static_cast<double>(n);
  const double signal_mean = std::max(mean_e - out.noise_offset, 1e-300);
  // A line of width w through a band-pass of width B keeps B / (B + w) of its power.
  const double transmission = bandwidth_hz / (bandwidth_hz + rad_to_hz(decorrelation_rate));
  out.t_eff = signal_mean / (transmission * kBoltzmann);
  const double a = signal_mean;
  const double b = out.noise_offset;
  summarise(out, std::move(energies), options.bins, [a, b](double e) {
    // Sum of two independent exponentials (signal and noise energies).
    if (b <= 0.0 || std::abs(a - b) < 1e-9 * a) {
      const double m = a + b;
      return b <= 0.0 ? 1.0 - std::exp(-e / a) : 1.0 - std::exp(-e / (0.5 * m)) * (1.0 + e / (0.5 * m));
    }
    return 1.0 - (a * std::exp(-e / a) - b * std::exp(-e / b)) / (a - b);
  });
  return out;
}

double kolmogorov_tail(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

}  // namespace levcool
