#include <doctest.h>

#include <cmath>
#include <vector>

#include "levcool/analysis.hpp"
#include "levcool/detection.hpp"
#include "levcool/errors.hpp"
#include "levcool/units.hpp"
#include "support.hpp"

using namespace levcool;
using levcool::testing::rel_diff;

namespace {

constexpr double kDt = 1.0 / (200.0 * 277.0);
constexpr double kSnn = 1.5e-17;

std::vector<double> noise_only(const DetectionModel& model, std::size_t n, std::uint64_t seed = 1) {
  Detector det(model, kDt, make_stream(seed, Stream::detection));
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = det.measure(0.0, static_cast<double>(i) * kDt);
  return out;
}

}  // namespace

TEST_SUITE("detection") {
  TEST_CASE("a noiseless detector passes the position through") {
    Detector det(DetectionModel{}, kDt, make_stream(1, Stream::detection));
    for (double x : {0.0, 1e-9, -3.5e-8}) CHECK(det.measure(x, 0.1) == x);
  }

  TEST_CASE("measurement noise is white at the configured density") {
    DetectionModel model;
    model.noise_psd = kSnn;
    const auto series = noise_only(model, 1 << 21);
    SegmentConfig seg;
    seg.length = 4096;
    const Spectrum s = welch_psd(series, 1.0 / kDt, seg);
    // One-sided estimate of a two-sided density S_nn sits at 2 S_nn.
    const double nyquist = 0.5 / kDt;
    CHECK(rel_diff(s.mean_level(10.0, nyquist / 2.0), 2.0 * kSnn) < 0.05);
    // Flat across the band: every decade-ish slice agrees within 5%.
    for (double lo : {50.0, 200.0, 1000.0, 5000.0, 12000.0}) {
      CHECK(rel_diff(s.mean_level(lo, 1.5 * lo), 2.0 * kSnn) < 0.05);
    }
  }

  TEST_CASE("a spurious mode shows up as a line with its configured power") {
    constexpr double rms = 3e-8;
    DetectionModel model;
    model.noise_psd = kSnn;
    model.spurious_modes.push_back({hz_to_rad(482.0), rms});
    const auto series = noise_only(model, 1 << 21, 3);
    SegmentConfig seg;
    seg.length = 1 << 19;  // ~0.1 Hz bins
    const Spectrum s = welch_psd(series, 1.0 / kDt, seg);
    const double floor = s.mean_level(500.0, 600.0);
    CHECK(rel_diff(floor, 2.0 * kSnn) < 0.05);
    const double band = s.integrate(481.0, 483.0);
    const double floor_part = floor * (s.integrate(481.0, 483.0) / s.mean_level(481.0, 483.0));
    CHECK(rel_diff(band - floor_part, rms * rms) < 0.05);
    // At this resolution the line clears the floor by more than 20 dB.
    double peak = 0.0;
    for (std::size_t i = 0; i < s.freqs.size(); ++i) {
      if (s.freqs[i] > 481.0 && s.freqs[i] < 483.0) peak = std::max(peak, s.psd[i]);
    }
    CHECK(peak > 100.0 * floor);
  }

  TEST_CASE("second harmonics appear at twice each line") {
    DetectionModel model;
    model.spurious_modes.push_back({hz_to_rad(482.0), 2e-8});
    model.include_second_harmonics = true;
    model.harmonic_fraction = 0.1;
    const auto series = noise_only(model, 1 << 20, 4);
    SegmentConfig seg;
    seg.length = 1 << 15;
    const Spectrum s = welch_psd(series, 1.0 / kDt, seg);
    CHECK(rel_diff(s.integrate(958.0, 970.0), std::pow(0.1 * 2e-8, 2)) < 0.05);
    CHECK(rel_diff(s.integrate(476.0, 488.0), 2e-8 * 2e-8) < 0.05);
  }

  TEST_CASE("signal and noise add without cross terms") {
    DetectionModel model;
    model.noise_psd = kSnn;
    Detector det(model, kDt, make_stream(5, Stream::detection));
    const double a = 1e-6;
    const double w = hz_to_rad(277.0);
    std::vector<double> series(1 << 21);
    for (std::size_t i = 0; i < series.size(); ++i) {
      const double t = static_cast<double>(i) * kDt;
      series[i] = det.measure(a * std::cos(w * t), t);
    }
    SegmentConfig seg;
    seg.length = 1 << 14;
    const Spectrum s = welch_psd(series, 1.0 / kDt, seg);
    const double floor = s.mean_level(1000.0, 5000.0);
    CHECK(rel_diff(floor, 2.0 * kSnn) < 0.05);
    const double band_width = s.integrate(270.0, 284.0) / s.mean_level(270.0, 284.0);
    CHECK(rel_diff(s.integrate(270.0, 284.0) - floor * band_width, 0.5 * a * a) < 0.03);
  }

  TEST_CASE("invalid detection models are rejected") {
    DetectionModel model;
    model.noise_psd = -1.0;
    CHECK_THROWS_AS(model.validate(), ValidationError);
    DetectionModel bad_line;
    bad_line.spurious_modes.push_back({0.0, 1e-9});
    CHECK_THROWS_AS(bad_line.validate(), ValidationError);
  }
}
