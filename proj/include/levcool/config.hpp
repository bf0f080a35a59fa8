#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "levcool/detection.hpp"
#include "levcool/params.hpp"
#include "levcool/pll.hpp"
#include "levcool/velocity_feedback.hpp"

namespace levcool {

using Json = nlohmann::json;

enum class ControllerKind { none, velocity, pll };

/// Switches for the extra physics of the improved experimental model. Each
/// one only takes effect when the corresponding values are configured.
struct ImprovedModel {
  bool freq_drift = false;
  bool spurious_modes = false;
  bool offset_force = false;
  bool range_limit = false;
  bool modulation_cap = false;

  bool any() const {
    return freq_drift || spurious_modes || offset_force || range_limit || modulation_cap;
  }
};

struct AnalysisOptions {
  std::size_t segment_length = 0;  // Welch samples per segment, 0 = automatic
  std::size_t energy_bins = 60;
  double energy_spacing = 3.0;  // decorrelation times between energy samples
  std::size_t min_energy_samples = 10000;
  /// Also build the histogram from the measured signal alone.
  bool measured_energy = false;
  double measured_bandwidth_hz = 0.0;  // 0 picks 4x the fitted linewidth
};

struct OutputOptions {
  std::filesystem::path directory;  // empty: nothing written
  bool trace = true;
  bool probes = false;
  std::uint64_t trace_stride = 1;  // rows of the analysed trace per CSV row
  bool spectra = true;
  bool histogram = true;
};

/// One simulation: physical system, detector, controller, run length and
/// what to write. `source` keeps the canonical JSON it was built from.
struct RunConfig {
  std::string name = "run";
  SystemParams params;
  DetectionModel detection;
  ControllerKind controller = ControllerKind::none;
  VelocityDampingConfig velocity;
  PllConfig pll;
  SimConfig sim;
  ImprovedModel improved;
  AnalysisOptions analysis;
  OutputOptions output;
  Json source;

  /// Parameters with the improved-model switches applied.
  SystemParams effective_params() const;
  DetectionModel effective_detection() const;
  PllConfig effective_pll() const;

  void validate() const;
};

/// Builds a RunConfig from JSON. Every unknown key, missing requirement and
/// out-of-range value is collected into one ValidationError.
RunConfig parse_run_config(const Json& doc);

/// Reads a JSON file (comments allowed) and parses it.
Json read_json_file(const std::filesystem::path& path);
RunConfig load_run_config(const std::filesystem::path& path);

/// Writes `value` at a dotted path such as "controller.gamma_fb_hz",
/// creating intermediate objects.
void set_json_path(Json& doc, const std::string& dotted_path, const Json& value);
/// Value at a dotted path, or nullopt.
std::optional<Json> get_json_path(const Json& doc, const std::string& dotted_path);

/// FNV-1a over the compact dump of `doc`, as 16 hex digits.
std::string config_hash(const Json& doc);

const char* to_string(ControllerKind kind);

}  // namespace levcool
