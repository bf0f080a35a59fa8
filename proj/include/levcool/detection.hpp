#pragma once

#include <vector>

#include "levcool/rng.hpp"

namespace levcool {

struct SpuriousMode {
  double frequency = 0.0;      // rad/s
  double rms_amplitude = 0.0;  // m
};

/// Position detector: white noise of (two-sided) density `noise_psd` plus
/// optional sinusoidal lines from other modes of motion.
struct DetectionModel {
  double noise_psd = 0.0;  // m^2/Hz; per-sample variance is noise_psd/dt
  std::vector<SpuriousMode> spurious_modes;
  bool include_second_harmonics = false;
  double harmonic_fraction = 0.1;  // rms of each 2f line relative to its fundamental

  void validate() const;
};

/// Stateful per-run detector. Spurious-mode phases are drawn once at
/// construction from the detection stream.
class Detector {
 public:
  Detector(DetectionModel model, double dt, Rng rng);

  double measure(double x_true, double t);

  double noise_sigma() const noexcept { return sigma_; }

 private:
  struct Line {
    double omega;
    double amplitude;  // peak
    double phase;
  };

  DetectionModel model_;
  double sigma_;
  std::vector<Line> lines_;
  Rng rng_;
  Gaussian gauss_;
};

}  // namespace levcool
