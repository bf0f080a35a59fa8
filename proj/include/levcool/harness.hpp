#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "levcool/analysis.hpp"
#include "levcool/config.hpp"
#include "levcool/controller.hpp"
#include "levcool/theory.hpp"
#include "levcool/trace.hpp"

namespace levcool {

std::unique_ptr<Controller> make_controller(const RunConfig& config);

/// Closed-form inputs for the configured system.
theory::TheoryInputs theory_inputs(const RunConfig& config);

/// Rate (rad/s) at which the configured closed loop forgets its state,
/// before looking at any data: gamma0 plus the feedback contribution.
double expected_decorrelation_rate(const RunConfig& config);

struct RunSummary {
  std::string name;
  std::uint64_t seed = 0;
  std::string config_hash;
  TemperatureEstimate temperature;
  double decorrelation_rate = 0.0;  // rad/s, used for blocking
  std::optional<LorentzianFit> fit;
  std::string fit_error;
  std::optional<double> lock_fraction;  // PLL: share of samples with SNR_L >= 1
  std::optional<EnergyDistribution> energy;
  std::optional<EnergyDistribution> measured_energy;
  std::string energy_error;
  Json theory;
  double wall_seconds = 0.0;

  double linewidth_hz() const { return fit && fit->converged ? fit->linewidth_hz : -1.0; }
};

struct RunResult {
  RunSummary summary;
  SimTrace trace;
  Spectrum spectrum_x;
  Spectrum spectrum_measured;
};

struct SimulateOptions {
  bool energy = true;      // fit the energy distribution
  bool keep_trace = true;  // keep samples in the result
};

/// Runs the simulation and all analyses. Throws ValidationError or
/// SimulationFault; analysis shortfalls are reported in the summary.
RunResult simulate(const RunConfig& config, SimulateOptions options = {});

Json to_json(const RunSummary& summary);

/// simulate() plus the artifact set in `out_dir`: trace.csv, spectrum_x.csv,
/// spectrum_measured.csv, energy_hist.csv, summary.json and manifest.json.
RunSummary run_single(const RunConfig& config, const std::filesystem::path& out_dir);

void write_spectrum_csv(std::ostream& out, const Spectrum& spectrum);
/// `theory_pdf`, when given, adds a `pdf_theory` column evaluated at bin centres.
void write_histogram_csv(std::ostream& out, const EnergyDistribution& dist,
                         const std::function<double(double)>& theory_pdf = {});

// ---------------------------------------------------------------- sweeps

struct SweepAxis {
  std::string path;  // dotted config path, e.g. "controller.gamma_fb_hz"
  std::vector<Json> values;
};

/// Cartesian (or zipped) grid over config paths, with replicates. Every run
/// gets seed derive_seed(master_seed, point * replicates + replicate).
struct SweepSpec {
  std::string name = "sweep";
  Json base;
  std::vector<SweepAxis> axes;
  bool zip = false;
  std::size_t replicates = 1;
  std::uint64_t master_seed = 1;

  std::size_t points() const;
  std::vector<Json> point_values(std::size_t point) const;
  Json point_config(std::size_t point, std::size_t replicate) const;
  std::uint64_t seed_for(std::size_t point, std::size_t replicate) const;
  void validate() const;
};

SweepSpec parse_sweep_spec(const Json& doc);
SweepSpec load_sweep_spec(const std::filesystem::path& path);

enum class RunStatus { ok, validation_error, fault };
const char* to_string(RunStatus status);

struct SweepRow {
  std::size_t point = 0;
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  std::vector<Json> axis_values;
  RunStatus status = RunStatus::ok;
  std::string message;
  RunSummary summary;
};

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

/// Runs every (point, replicate) on `jobs` worker threads. A failing point is
/// recorded in its row and the sweep continues. Rows come back ordered by
/// (point, replicate) regardless of scheduling.
std::vector<SweepRow> run_sweep(const SweepSpec& spec, unsigned jobs,
                                const ProgressFn& progress = {});

/// Columns: point,replicate,seed,<axis paths>,T_x,T_full,stderr_x,stderr_full,
/// linewidth_hz,lock_fraction,status,message.
void write_sweep_csv(std::ostream& out, const SweepSpec& spec, const std::vector<SweepRow>& rows);

// ------------------------------------------------------------ reproduce

const std::vector<std::string>& figure_ids();

struct ReproduceOptions {
  std::filesystem::path preset_dir = LEVCOOL_PRESET_DIR;
  std::filesystem::path out_dir = ".";
  unsigned jobs = 1;
  std::optional<std::uint64_t> seed;  // overrides the preset master seed
  /// Multiplies every simulated duration; < 1 gives quick, noisier output.
  double duration_scale = 1.0;
  ProgressFn progress;
};

/// Emits the data files behind one figure; returns the paths written.
/// Throws ValidationError for an unknown id or a broken preset.
std::vector<std::filesystem::path> reproduce(const std::string& figure,
                                             const ReproduceOptions& options);

/// Least-squares line y = slope x + intercept.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace levcool
