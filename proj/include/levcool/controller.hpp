#pragma once

#include <span>
#include <string>
#include <vector>

namespace levcool {

/// What a controller asks of the dynamics for the current step.
struct ControlAction {
  double force = 0.0;                 // N
  double stiffness_modulation = 0.0;  // dimensionless, |.| < 1
  double signal = 0.0;                // logged as the trace's `feedback` column
};

/// Per-sample feedback contract. At every step the simulator hands over the
/// measured position at time t and applies the returned action to the step
/// from t to t + dt. Implementations are causal and stateful; one instance
/// belongs to one run.
class Controller {
 public:
  virtual ~Controller() = default;

  virtual ControlAction update(double x_measured, double t) = 0;

  /// Names of extra per-sample columns (controller internals) to log.
  virtual std::vector<std::string> probe_names() const { return {}; }
  /// Fills `out` (sized like probe_names()) with the current internals.
  virtual void probe(std::span<double> out) const { (void)out; }
};

class NoFeedback final : public Controller {
 public:
  ControlAction update(double, double) override { return {}; }
};

}  // namespace levcool
