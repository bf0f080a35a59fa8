#include "levcool/detection.hpp"

#include <cmath>
#include <string>

#include "levcool/errors.hpp"
#include "levcool/units.hpp"

namespace levcool {

void DetectionModel::validate() const {
  ProblemList p;
  p.require(noise_psd >= 0.0, "detection.noise_psd must be >= 0");
  for (std::size_t i = 0; i < spurious_modes.size(); ++i) {
    const auto idx = std::to_string(i);
    p.require(spurious_modes[i].frequency > 0.0,
              "detection.spurious_modes[" + idx + "].frequency must be > 0");
    p.require(spurious_modes[i].rms_amplitude >= 0.0,
              "detection.spurious_modes[" + idx + "].rms_amplitude must be >= 0");
  }
  p.require(harmonic_fraction >= 0.0, "detection.harmonic_fraction must be >= 0");
  p.throw_if_any();
}

Detector::Detector(DetectionModel model, double dt, Rng rng)
    : model_(std::move(model)), sigma_(0.0), rng_(std::move(rng)) {
  model_.validate();
  if (dt <= 0.0) throw ValidationError("detector dt must be > 0");
  sigma_ = std::sqrt(model_.noise_psd / dt);

  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  for (const auto& mode : model_.spurious_modes) {
    lines_.push_back({mode.frequency, std::sqrt(2.0) * mode.rms_amplitude, phase(rng_)});
    if (model_.include_second_harmonics) {
      lines_.push_back({2.0 * mode.frequency,
                        std::sqrt(2.0) * mode.rms_amplitude * model_.harmonic_fraction,
                        phase(rng_)});
    }
  }
}

double Detector::measure(double x_true, double t) {
  double y = x_true;
  if (sigma_ > 0.0) y += sigma_ * gauss_(rng_);
  for (const auto& line : lines_) y += line.amplitude * std::cos(line.omega * t + line.phase);
  return y;
}

}  // namespace levcool
