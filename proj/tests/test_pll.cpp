#include <doctest.h>

#include <cmath>
#include <vector>

#include "levcool/analysis.hpp"
#include "levcool/dynamics.hpp"
#include "levcool/errors.hpp"
#include "levcool/pll.hpp"
#include "support.hpp"

using namespace levcool;
using namespace levcool::testing;

namespace {

// Hand-written closed-loop 3 dB bandwidth of the type-2 loop.
double b3db_formula(double wn, double zeta) {
  const double a = 2.0 * zeta * zeta + 1.0;
  return wn * std::sqrt(a + std::sqrt(a * a + 1.0));
}

}  // namespace

TEST_SUITE("feedback-pll") {
  TEST_CASE("bandwidth relations") {
    for (double z : {0.5, 0.707, 1.0, 5.0, 20.0}) {
      const double wn = hz_to_rad(3.0);
      CHECK(rel_diff(pll_b3db(wn, z), b3db_formula(wn, z)) < 1e-14);
      CHECK(rel_diff(pll_omega_n_for_b3db(pll_b3db(wn, z), z), wn) < 1e-14);
      CHECK(rel_diff(pll_noise_bandwidth_hz(wn, z), wn * (z + 0.25 / z) / (4.0 * kPi)) < 1e-14);
    }
    // Large damping: noise bandwidth in Hz tends to B_3dB / (8 pi).
    const double b = hz_to_rad(104.0);
    const double wn = pll_omega_n_for_b3db(b, 50.0);
    CHECK(rel_diff(pll_noise_bandwidth_hz(wn, 50.0), b / (8.0 * kPi)) < 1e-3);
  }

  TEST_CASE("config from a bandwidth") {
    const auto c = PllConfig::from_bandwidth(hz_to_rad(50.0), 5.0, hz_to_rad(277.0), 0.01);
    CHECK(rel_diff(c.b3db(), hz_to_rad(50.0)) < 1e-12);
    CHECK(c.effective_quad_bandwidth() == doctest::Approx(5.0 * c.b3db()));
    CHECK(c.tau2() / c.tau1() == doctest::Approx(2.0 * c.zeta * c.omega_n));
  }

  TEST_CASE("loop signal-to-noise ratio") {
    CHECK(snr_loop(2.0 * 3.0 * 1.5e-17, 1.5e-17, 3.0) == doctest::Approx(1.0));
    CHECK(std::isinf(snr_loop(1e-12, 0.0, 3.0)));
    const double m = 4.0 / 3.0 * kPi * std::pow(193.5e-9, 3) * 1850.0;
    const double w0 = hz_to_rad(277.0);
    const double x2 = 1.380649e-23 * 293.0 / (m * w0 * w0);
    CHECK(x2 == doctest::Approx(2.38e-11).epsilon(0.01));
    const double bl = hz_to_rad(104.0) / (8.0 * kPi);
    CHECK(snr_loop(x2, 1.5e-17, bl) == doctest::Approx(x2 / (2.0 * bl * 1.5e-17)));
  }

  TEST_CASE("invalid loop settings are rejected") {
    PllConfig c;
    c.omega_n = 10.0;
    c.nco_center = 1000.0;
    CHECK_NOTHROW(c.validate());
    PllConfig deep = c;
    deep.modulation_depth = 0.06;
    CHECK_THROWS_AS(deep.validate(), ValidationError);
    PllConfig flat = c;
    flat.zeta = 0.0;
    CHECK_THROWS_AS(flat.validate(), ValidationError);
  }

  TEST_CASE("phase detector reads zero on an aligned tone") {
    const ToneRig rig;
    Pll pll(rig.config(hz_to_rad(1.0), 1.0), rig.dt);
    const auto rel = track_phase(rig, pll, 20000, [](double) { return 0.0; });
    CHECK(std::abs(pll.state().raw_error) < 1e-3);
    CHECK(std::abs(rel.back()) < 1e-3);
  }

  TEST_CASE("phase detector reports a quarter-pi offset and is amplitude invariant") {
    const ToneRig rig;
    const double w = hz_to_rad(rig.carrier_hz);
    auto detect_offset = [&](double amplitude) {
      PllConfig c = rig.config(1.0, 1.0);
      Pll pll(c, rig.dt);
      double err = 0.0;
      // The NCO is run open loop at the carrier so only the detector acts.
      for (int i = 0; i < 20000; ++i) {
        const double t = i * rig.dt;
        pll.state().theta = w * t;
        err = pll.detect(amplitude * std::cos(w * t + kPi / 4.0));
      }
      return err;
    };
    // Oracle: quadratures of cos(w t + phi) mixed with cos/sin(w t), averaged.
    const double x = 0.5 * std::cos(kPi / 4.0);
    const double y = -0.5 * std::sin(kPi / 4.0);
    const double reference = -std::atan2(y, x);
    CHECK(reference == doctest::Approx(kPi / 4.0));
    const double e1 = detect_offset(1.0);
    const double e10 = detect_offset(10.0);
    CHECK(std::abs(e1 - kPi / 4.0) < 0.01 * kPi / 4.0);
    CHECK(std::abs(e10 - e1) < 1e-12);
  }

  TEST_CASE("a degenerate zero input holds the previous error") {
    const ToneRig rig;
    Pll pll(rig.config(1.0, 1.0), rig.dt);
    CHECK(pll.detect(0.0) == 0.0);
    CHECK_FALSE(pll.state().has_error);
  }

  TEST_CASE("zero phase error holds the NCO frequency") {
    const ToneRig rig;
    Pll pll(rig.config(hz_to_rad(2.0), 1.0), rig.dt);
    pll.state().integrator = 3.0;
    for (int i = 0; i < 1000; ++i) pll.advance(0.0);
    CHECK(pll.state().freq == doctest::Approx(hz_to_rad(rig.carrier_hz) + 3.0));
  }

  TEST_CASE("phase step response matches the continuous second-order loop") {
    for (double zeta : {0.707, 1.0, 5.0}) {
      const double wn = zeta > 2.0 ? hz_to_rad(0.5) : hz_to_rad(2.0);
      CHECK(step_response_error(wn, zeta) < 0.05);
    }
  }

  TEST_CASE("measured 3 dB bandwidth matches the closed-loop formula") {
    for (double zeta : {0.707, 5.0}) {
      const double wn = zeta > 2.0 ? hz_to_rad(0.5) : hz_to_rad(2.0);
      CHECK(rel_diff(measured_b3db(wn, zeta), b3db_formula(wn, zeta)) < 0.05);
    }
  }

  TEST_CASE("lock is acquired on a detuned noiseless tone") {
    const ToneRig rig;
    Pll pll(rig.config(hz_to_rad(2.0), 1.0), rig.dt);
    const double detune = hz_to_rad(0.5);
    track_phase(rig, pll, 400000, [&](double t) { return detune * t; });
    CHECK(std::abs(pll.state().error) < 1e-3);
    CHECK(rel_diff(pll.state().freq, hz_to_rad(rig.carrier_hz) + detune) < 1e-6);
  }

  TEST_CASE("the range limit clamps the NCO frequency") {
    ToneRig rig;
    PllConfig c = rig.config(hz_to_rad(2.0), 1.0);
    c.range_limit = hz_to_rad(1.0);
    Pll pll(c, rig.dt);
    double worst = 0.0;
    const double center = c.nco_center;
    const double w = hz_to_rad(rig.carrier_hz);
    for (int i = 0; i < 200000; ++i) {
      const double t = i * rig.dt;
      pll.advance(pll.detect(std::cos(w * t + hz_to_rad(5.0) * t)));
      worst = std::max(worst, std::abs(pll.state().freq - center));
    }
    CHECK(worst <= hz_to_rad(1.0) * (1.0 + 1e-12));
  }

  TEST_CASE("no modulation at zero depth") {
    PllController ctl(PllConfig::from_bandwidth(hz_to_rad(20.0), 5.0, hz_to_rad(277.0), 0.0),
                      1e-5, 0.0);
    for (int i = 0; i < 1000; ++i) {
      const auto a = ctl.update(1e-9 * std::cos(hz_to_rad(277.0) * i * 1e-5), i * 1e-5);
      CHECK(a.stiffness_modulation == 0.0);
      CHECK(a.force == 0.0);
    }
  }

  TEST_CASE("the modulation runs at twice the NCO frequency") {
    const double f0 = 277.0;
    const double dt = 1.0 / (200.0 * f0);
    PllController ctl(PllConfig::from_bandwidth(hz_to_rad(20.0), 5.0, hz_to_rad(f0), 0.02), dt, 0.0);
    std::vector<double> mod(1 << 18);
    for (std::size_t i = 0; i < mod.size(); ++i) {
      const double t = static_cast<double>(i) * dt;
      mod[i] = ctl.update(1e-9 * std::cos(hz_to_rad(f0) * t), t).stiffness_modulation;
    }
    SegmentConfig seg;
    seg.length = 1 << 15;
    const auto s = welch_psd(mod, 1.0 / dt, seg);
    const auto peak = std::max_element(s.psd.begin(), s.psd.end()) - s.psd.begin();
    CHECK(s.freqs[static_cast<std::size_t>(peak)] == doctest::Approx(2.0 * f0).epsilon(0.01));
    CHECK(s.integrate(2.0 * f0 - 5.0, 2.0 * f0 + 5.0) == doctest::Approx(0.5 * 0.02 * 0.02).epsilon(0.03));
  }

  TEST_CASE("locked modulation removes energy from a noiseless undamped oscillator") {
    SystemParams p;
    p.bath.pressure = 0.0;
    SimConfig cfg = make_sim_config(p.omega0(), 3.0, 1, 0.0);
    cfg.initial = InitialCondition::explicit_state;
    cfg.x0 = 1e-8;
    PllConfig c = PllConfig::from_bandwidth(hz_to_rad(20.0), 5.0, p.omega0(), 0.01);
    PllController ctl(c, cfg.dt, 0.0);
    const SimTrace trace = run(p, {}, ctl, cfg);
    // Peak |x| per oscillation period after the loop has settled.
    const auto per = static_cast<std::size_t>(std::llround(kTwoPi / (p.omega0() * cfg.dt)));
    std::vector<double> peaks;
    for (std::size_t start = 20 * per; start + per <= trace.size(); start += per) {
      double m = 0.0;
      for (std::size_t i = start; i < start + per; ++i) m = std::max(m, std::abs(trace.x[i]));
      peaks.push_back(m);
    }
    REQUIRE(peaks.size() > 100);
    for (std::size_t k = 1; k < peaks.size(); ++k) CHECK(peaks[k] < peaks[k - 1]);
    // Envelope decays at G w0 / 4.
    const double span = static_cast<double>(peaks.size() - 1) * per * cfg.dt;
    const double rate = std::log(peaks.front() / peaks.back()) / span;
    CHECK(rel_diff(rate, 0.01 * p.omega0() / 4.0) < 0.05);
  }

  TEST_CASE("controller probes report the loop internals") {
    PllController ctl(PllConfig::from_bandwidth(hz_to_rad(20.0), 5.0, hz_to_rad(277.0), 0.01),
                      1e-5, 1.5e-17);
    CHECK(ctl.probe_names() == std::vector<std::string>{"theta_o", "f_nco_hz", "phase_error", "snr_l"});
    std::vector<double> out(4);
    for (int i = 0; i < 10000; ++i) ctl.update(1e-7 * std::cos(hz_to_rad(277.0) * i * 1e-5), i * 1e-5);
    ctl.probe(out);
    CHECK(out[1] == doctest::Approx(277.0).epsilon(0.01));
    CHECK(out[3] > 1.0);
  }
}
