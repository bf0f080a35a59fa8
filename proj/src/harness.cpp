#include "levcool/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "levcool/dynamics.hpp"
#include "levcool/errors.hpp"
#include "levcool/pll.hpp"
#include "levcool/rng.hpp"
#include "levcool/units.hpp"
#include "levcool/velocity_feedback.hpp"

namespace levcool {

namespace fs = std::filesystem;

std::unique_ptr<Controller> make_controller(const RunConfig& config) {
  switch (config.controller) {
    case ControllerKind::none:
      return std::make_unique<NoFeedback>();
    case ControllerKind::velocity:
      return std::make_unique<VelocityDampingController>(config.velocity, config.params.mass(),
                                                         config.sim.dt);
    case ControllerKind::pll:
      return std::make_unique<PllController>(config.effective_pll(), config.sim.dt,
                                             config.detection.noise_psd);
  }
  throw ValidationError("unknown controller type");
}

theory::TheoryInputs theory_inputs(const RunConfig& config) {
  theory::TheoryInputs in;
  in.mass = config.params.mass();
  in.omega0 = config.params.omega0();
  in.gamma0 = config.params.gamma0();
  in.temperature = config.params.bath.temperature;
  in.noise_psd = config.detection.noise_psd;
  if (config.controller == ControllerKind::velocity) in.gamma_fb = config.velocity.gamma_fb;
  if (config.controller == ControllerKind::pll) {
    in.modulation_depth = config.pll.modulation_depth;
    in.zeta = config.pll.zeta;
    in.omega_n = config.pll.omega_n;
  }
  return in;
}

double expected_decorrelation_rate(const RunConfig& config) {
  const double gamma0 = config.params.gamma0();
  switch (config.controller) {
    case ControllerKind::none:
      return gamma0;
    case ControllerKind::velocity:
      return gamma0 + config.velocity.gamma_fb;
    case ControllerKind::pll:
      return gamma0 + 0.5 * config.pll.modulation_depth * config.params.omega0();
  }
  return gamma0;
}

namespace {

Json theory_json(const RunConfig& config) {
  const auto in = theory_inputs(config);
  Json j;
  j["gamma0_rad_s"] = in.gamma0;
  switch (config.controller) {
    case ControllerKind::none:
      j["T_expected"] = in.temperature;
      break;
    case ControllerKind::velocity: {
      const auto t = theory::vd_temperature_terms(in);
      j["T_vd"] = t.total;
      j["T_vd_thermal_term"] = t.thermal;
      j["T_vd_noise_term"] = t.noise;
      j["T_eff_energy"] = theory::effective_temperature(theory::Scheme::velocity_damping, in);
      break;
    }
    case ControllerKind::pll: {
      const auto l = theory::pll_limits(in);
      j["b3db_hz"] = rad_to_hz(l.b3db);
      j["g_lim"] = l.g_lim;
      j["T_lim1"] = l.t_lim1;
      j["T_lim2"] = l.t_lim2;
      j["noise_bandwidth_hz"] = l.b_l_hz;
      if (in.gamma0 > 0.0) {
        j["T_eff_energy"] = theory::effective_temperature(theory::Scheme::pll, in);
      }
      break;
    }
  }
  return j;
}

theory::Scheme scheme_of(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::velocity:
      return theory::Scheme::velocity_damping;
    case ControllerKind::pll:
      return theory::Scheme::pll;
    default:
      return theory::Scheme::thermal;
  }
}

}  // namespace

RunResult simulate(const RunConfig& config, SimulateOptions options) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  const SystemParams params = config.effective_params();
  const DetectionModel detection = config.effective_detection();
  auto controller = make_controller(config);

  RunResult result;
  result.trace = run(params, detection, *controller, config.sim);
  const TraceView view = result.trace.analysis();
  RunSummary& s = result.summary;
  s.name = config.name;
  s.seed = config.sim.seed;
  s.config_hash = config_hash(config.source);

  const double mass = params.mass();
  const double omega0 = params.omega0();
  const double rate0 = expected_decorrelation_rate(config);

  SegmentConfig seg;
  seg.length = config.analysis.segment_length;
  try {
    result.spectrum_x = welch_psd(view.x, view.sample_rate(), seg);
    result.spectrum_measured = welch_psd(view.x_measured, view.sample_rate(), seg);
  } catch (const std::exception& e) {
    s.fit_error = e.what();
  }

  if (!result.spectrum_x.freqs.empty()) {
    try {
      LorentzianGuess guess;
      guess.center_hz = rad_to_hz(omega0);
      guess.linewidth_hz = std::max(rad_to_hz(rate0), 2.0 * result.spectrum_x.resolution());
      s.fit = lorentzian_fit(result.spectrum_x, guess);
      if (!s.fit->converged) s.fit_error = "lorentzian fit did not converge";
    } catch (const std::exception& e) {
      s.fit_error = e.what();
    }
  }

  double rate = rate0;
  if (s.fit && s.fit->converged) rate = std::clamp(hz_to_rad(s.fit->linewidth_hz), 0.2 * rate0, rate0);
  s.decorrelation_rate = rate;
  s.temperature = temperature(view, mass, omega0, rate);
  if (!std::isfinite(s.temperature.t_full) || !std::isfinite(s.temperature.t_x)) {
    throw SimulationFault(config.sim.n_steps, "motion ran away: temperature is not finite");
  }

  if (config.controller == ControllerKind::pll) {
    const auto snr = view.probe("snr_l");
    if (!snr.empty()) {
      const auto locked = std::count_if(snr.begin(), snr.end(), [](double v) { return v >= 1.0; });
      s.lock_fraction = static_cast<double>(locked) / static_cast<double>(snr.size());
    }
  }

  if (options.energy) {
    EnergyOptions eo;
    eo.bins = config.analysis.energy_bins;
    eo.spacing_factor = config.analysis.energy_spacing;
    eo.min_samples = config.analysis.min_energy_samples;
    try {
      s.energy = energy_distribution(view, mass, omega0, rate, eo);
    } catch (const InsufficientData& e) {
      s.energy_error = e.what();
    }
    if (config.analysis.measured_energy) {
      double bw = config.analysis.measured_bandwidth_hz;
      if (!(bw > 0.0)) bw = std::max(4.0 * rad_to_hz(rate), 1.0);
      try {
        s.measured_energy = measured_energy_distribution(view, mass, omega0, detection.noise_psd,
                                                         bw, rate, eo);
      } catch (const InsufficientData& e) {
        if (!s.energy_error.empty()) s.energy_error += "; ";
        s.energy_error += e.what();
      }
    }
  }

  s.theory = theory_json(config);
  if (!options.keep_trace) result.trace = SimTrace{};
  s.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

namespace {

Json energy_json(const EnergyDistribution& e) {
  return Json{{"T_eff", e.t_eff},
              {"noise_offset_joule", e.noise_offset},
              {"samples", e.samples},
              {"ks_statistic", e.ks_statistic},
              {"ks_threshold_1pct", e.ks_threshold},
              {"ks_pvalue", e.ks_pvalue},
              {"ks_pass", e.ks_pass()}};
}

}  // namespace

Json to_json(const RunSummary& s) {
  Json j;
  j["name"] = s.name;
  j["seed"] = s.seed;
  j["config_hash"] = s.config_hash;
  j["temperature"] = {{"T_x", s.temperature.t_x},
                      {"T_full", s.temperature.t_full},
                      {"stderr_x", s.temperature.stderr_x},
                      {"stderr_full", s.temperature.stderr_full},
                      {"blocks", s.temperature.blocks}};
  j["decorrelation_rate_rad_s"] = s.decorrelation_rate;
  if (s.fit) {
    j["lorentzian"] = {{"center_hz", s.fit->center_hz},
                       {"linewidth_hz", s.fit->linewidth_hz},
                       {"area_m2", s.fit->area},
                       {"floor_m2_per_hz", s.fit->floor},
                       {"converged", s.fit->converged}};
  }
  if (!s.fit_error.empty()) j["lorentzian_error"] = s.fit_error;
  if (s.lock_fraction) j["lock_fraction"] = *s.lock_fraction;
  if (s.energy) j["energy"] = energy_json(*s.energy);
  if (s.measured_energy) j["measured_energy"] = energy_json(*s.measured_energy);
  if (!s.energy_error.empty()) j["energy_error"] = s.energy_error;
  j["theory"] = s.theory;
  j["wall_seconds"] = s.wall_seconds;
  return j;
}

void write_spectrum_csv(std::ostream& out, const Spectrum& spectrum) {
  out << "freq_hz,psd_m2_per_hz\n";
  for (std::size_t i = 0; i < spectrum.freqs.size(); ++i) {
    fmt::print(out, "{:.10g},{:.10g}\n", spectrum.freqs[i], spectrum.psd[i]);
  }
}

void write_histogram_csv(std::ostream& out, const EnergyDistribution& dist,
                         const std::function<double(double)>& theory_pdf) {
  out << (theory_pdf ? "E_joule,count,pdf,pdf_theory\n" : "E_joule,count,pdf\n");
  for (std::size_t i = 0; i < dist.counts.size(); ++i) {
    const double e = 0.5 * (dist.bin_edges[i] + dist.bin_edges[i + 1]);
    if (theory_pdf) {
      fmt::print(out, "{:.10g},{},{:.10g},{:.10g}\n", e, dist.counts[i], dist.pdf[i], theory_pdf(e));
    } else {
      fmt::print(out, "{:.10g},{},{:.10g}\n", e, dist.counts[i], dist.pdf[i]);
    }
  }
}

namespace {

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  return out;
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw ValidationError(fmt::format("output directory {} is not writable", dir.string()));
  }
}

void write_json(const fs::path& path, const Json& j) {
  auto out = open_output(path);
  out << j.dump(2) << "\n";
}

/// Copy of `view` keeping every `stride`-th row.
SimTrace decimate(const TraceView& view, std::uint64_t stride) {
  SimTrace t;
  t.dt = view.dt * static_cast<double>(stride);
  t.probe_names = view.probe_names;
  t.probes.resize(view.probes.size());
  for (std::size_t i = 0; i < view.size(); i += stride) {
    t.t.push_back(view.t[i]);
    t.x.push_back(view.x[i]);
    t.v.push_back(view.v[i]);
    t.x_measured.push_back(view.x_measured[i]);
    t.feedback.push_back(view.feedback[i]);
    for (std::size_t k = 0; k < view.probes.size(); ++k) t.probes[k].push_back(view.probes[k][i]);
  }
  return t;
}

}  // namespace

RunSummary run_single(const RunConfig& config, const fs::path& out_dir) {
  config.validate();
  ensure_directory(out_dir);
  RunResult r = simulate(config, {config.output.histogram, config.output.trace});
  const RunSummary& s = r.summary;
  std::vector<std::string> artifacts;

  if (config.output.trace) {
    auto out = open_output(out_dir / "trace.csv");
    const TraceView view = r.trace.analysis();
    if (config.output.trace_stride > 1) {
      write_trace_csv(out, decimate(view, config.output.trace_stride).raw(), config.output.probes);
    } else {
      write_trace_csv(out, view, config.output.probes);
    }
    artifacts.push_back("trace.csv");
  }
  if (config.output.spectra && !r.spectrum_x.freqs.empty()) {
    auto a = open_output(out_dir / "spectrum_x.csv");
    write_spectrum_csv(a, r.spectrum_x);
    auto b = open_output(out_dir / "spectrum_measured.csv");
    write_spectrum_csv(b, r.spectrum_measured);
    artifacts.push_back("spectrum_x.csv");
    artifacts.push_back("spectrum_measured.csv");
  }
  if (config.output.histogram && s.energy) {
    const auto in = theory_inputs(config);
    const auto scheme = scheme_of(config.controller);
    std::function<double(double)> pdf;
    if (scheme != theory::Scheme::pll || in.gamma0 > 0.0) {
      pdf = [=](double e) { return theory::energy_pdf(scheme, in, e); };
    }
    auto out = open_output(out_dir / "energy_hist.csv");
    write_histogram_csv(out, *s.energy, pdf);
    artifacts.push_back("energy_hist.csv");
    if (s.measured_energy) {
      auto m = open_output(out_dir / "energy_hist_measured.csv");
      write_histogram_csv(m, *s.measured_energy);
      artifacts.push_back("energy_hist_measured.csv");
    }
  }
  write_json(out_dir / "summary.json", to_json(s));
  artifacts.push_back("summary.json");

  Json manifest;
  manifest["tool"] = "cool-sim";
  manifest["version"] = LEVCOOL_VERSION;
  manifest["config_hash"] = s.config_hash;
  manifest["seed"] = s.seed;
  manifest["config"] = config.source;
  manifest["artifacts"] = artifacts;
  write_json(out_dir / "manifest.json", manifest);
  return s;
}

// ---------------------------------------------------------------- sweeps

std::size_t SweepSpec::points() const {
  if (axes.empty()) return 1;
  if (zip) return axes.front().values.size();
  std::size_t n = 1;
  for (const auto& a : axes) n *= a.values.size();
  return n;
}

std::vector<Json> SweepSpec::point_values(std::size_t point) const {
  std::vector<Json> values;
  values.reserve(axes.size());
  if (zip) {
    for (const auto& a : axes) values.push_back(a.values.at(point));
    return values;
  }
  // Last axis varies fastest.
  std::vector<std::size_t> idx(axes.size());
  std::size_t rem = point;
  for (std::size_t k = axes.size(); k-- > 0;) {
    idx[k] = rem % axes[k].values.size();
    rem /= axes[k].values.size();
  }
  for (std::size_t k = 0; k < axes.size(); ++k) values.push_back(axes[k].values[idx[k]]);
  return values;
}

std::uint64_t SweepSpec::seed_for(std::size_t point, std::size_t replicate) const {
  return derive_seed(master_seed, static_cast<std::uint64_t>(point * replicates + replicate));
}

Json SweepSpec::point_config(std::size_t point, std::size_t replicate) const {
  Json cfg = base;
  const auto values = point_values(point);
  for (std::size_t k = 0; k < axes.size(); ++k) set_json_path(cfg, axes[k].path, values[k]);
  set_json_path(cfg, "simulation.seed", seed_for(point, replicate));
  if (cfg.contains("output")) cfg.erase("output");
  if (!cfg.contains("name")) cfg["name"] = name;
  cfg["name"] = fmt::format("{}-p{}-r{}", cfg["name"].get<std::string>(), point, replicate);
  return cfg;
}

void SweepSpec::validate() const {
  ProblemList p;
  p.require(base.is_object(), "sweep.base must be a config object");
  p.require(replicates >= 1, "sweep.replicates must be >= 1");
  for (std::size_t k = 0; k < axes.size(); ++k) {
    p.require(!axes[k].path.empty(), fmt::format("sweep.axes[{}].path must be set", k));
    p.require(!axes[k].values.empty(), fmt::format("sweep.axes[{}].values must be non-empty", k));
    if (zip && !axes.empty()) {
      p.require(axes[k].values.size() == axes.front().values.size(),
                fmt::format("sweep.axes[{}] length differs from axis 0 in zip mode", k));
    }
  }
  p.throw_if_any();
}

SweepSpec parse_sweep_spec(const Json& doc) {
  ProblemList p;
  SweepSpec spec;
  if (!doc.is_object()) throw ValidationError("sweep spec must be a JSON object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    static const std::vector<std::string> known{"name", "description", "base", "axes",
                                                "mode", "replicates", "master_seed"};
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      p.add(fmt::format("sweep.{}: unknown key", it.key()));
    }
  }
  spec.name = doc.value("name", spec.name);
  if (doc.contains("base")) spec.base = doc["base"];
  else p.add("sweep.base is required");
  const std::string mode = doc.value("mode", std::string("grid"));
  if (mode == "zip") spec.zip = true;
  else if (mode != "grid") p.add("sweep.mode must be \"grid\" or \"zip\"");
  if (doc.contains("replicates")) {
    if (doc["replicates"].is_number_unsigned()) spec.replicates = doc["replicates"].get<std::size_t>();
    else p.add("sweep.replicates must be a positive integer");
  }
  if (doc.contains("master_seed")) {
    if (doc["master_seed"].is_number_unsigned()) spec.master_seed = doc["master_seed"].get<std::uint64_t>();
    else p.add("sweep.master_seed must be a non-negative integer");
  }
  if (doc.contains("axes")) {
    const Json& axes = doc["axes"];
    if (!axes.is_array()) {
      p.add("sweep.axes must be an array");
    } else {
      for (std::size_t i = 0; i < axes.size(); ++i) {
        SweepAxis a;
        if (!axes[i].is_object() || !axes[i].contains("path") || !axes[i]["path"].is_string()) {
          p.add(fmt::format("sweep.axes[{}].path must be a string", i));
          continue;
        }
        a.path = axes[i]["path"].get<std::string>();
        if (axes[i].contains("values") && axes[i]["values"].is_array()) {
          for (const auto& v : axes[i]["values"]) a.values.push_back(v);
        } else {
          p.add(fmt::format("sweep.axes[{}].values must be an array", i));
        }
        spec.axes.push_back(std::move(a));
      }
    }
  }
  p.throw_if_any();
  spec.validate();
  return spec;
}

SweepSpec load_sweep_spec(const fs::path& path) { return parse_sweep_spec(read_json_file(path)); }

const char* to_string(RunStatus status) {
  switch (status) {
    case RunStatus::ok:
      return "ok";
    case RunStatus::validation_error:
      return "validation_error";
    case RunStatus::fault:
      return "fault";
  }
  return "?";
}

namespace {

std::string join_problems(const ValidationError& e) {
  std::string out;
  for (const auto& p : e.problems()) {
    if (!out.empty()) out += "; ";
    out += p;
  }
  return out;
}

}  // namespace

std::vector<SweepRow> run_sweep(const SweepSpec& spec, unsigned jobs, const ProgressFn& progress) {
  spec.validate();
  const std::size_t total = spec.points() * spec.replicates;
  std::vector<SweepRow> rows(total);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      SweepRow& row = rows[i];
      row.point = i / spec.replicates;
      row.replicate = i % spec.replicates;
      row.seed = spec.seed_for(row.point, row.replicate);
      row.axis_values = spec.point_values(row.point);
      try {
        const RunConfig cfg = parse_run_config(spec.point_config(row.point, row.replicate));
        row.summary = simulate(cfg, {false, false}).summary;
      } catch (const ValidationError& e) {
        row.status = RunStatus::validation_error;
        row.message = join_problems(e);
      } catch (const std::exception& e) {
        row.status = RunStatus::fault;
        row.message = e.what();
      }
      const std::size_t finished = ++done;
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(finished, total);
      }
    }
  };

  const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(total)));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < n; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return rows;
}

namespace {

std::string csv_field(std::string s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

std::string json_cell(const Json& v) {
  if (v.is_string()) return csv_field(v.get<std::string>());
  if (v.is_number_float()) return fmt::format("{:.10g}", v.get<double>());
  return csv_field(v.dump());
}

}  // namespace

void write_sweep_csv(std::ostream& out, const SweepSpec& spec, const std::vector<SweepRow>& rows) {
  out << "point,replicate,seed";
  for (const auto& a : spec.axes) out << "," << csv_field(a.path);
  out << ",T_x,T_full,stderr_x,stderr_full,linewidth_hz,lock_fraction,status,message\n";
  for (const auto& r : rows) {
    fmt::print(out, "{},{},{}", r.point, r.replicate, r.seed);
    for (const auto& v : r.axis_values) out << "," << json_cell(v);
    if (r.status == RunStatus::ok) {
      const auto& t = r.summary.temperature;
      fmt::print(out, ",{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},", t.t_x, t.t_full, t.stderr_x,
                 t.stderr_full, r.summary.linewidth_hz());
      if (r.summary.lock_fraction) fmt::print(out, "{:.6g}", *r.summary.lock_fraction);
    } else {
      out << ",nan,nan,nan,nan,nan,";
    }
    out << "," << to_string(r.status) << "," << csv_field(r.message) << "\n";
  }
}

// ------------------------------------------------------------ reproduce

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("fit_line needs >= 2 points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw ValidationError("fit_line needs distinct x values");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

const std::vector<std::string>& figure_ids() {
  static const std::vector<std::string> ids{"fig2a", "fig2b", "fig2c", "fig4a", "fig4b", "fig5"};
  return ids;
}

namespace {

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void write(const fs::path& path) const {
    auto out = open_output(path);
    for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
    out << "\n";
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) fmt::print(out, "{}{:.10g}", i ? "," : "", r[i]);
      out << "\n";
    }
  }
};

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Averages over replicates of one point; NaN when every replicate failed.
struct PointStats {
  double t_x = kNaN, t_full = kNaN, stderr_x = kNaN, stderr_full = kNaN;
  double linewidth_hz = kNaN, lock_fraction = kNaN;
  std::size_t ok = 0;
};

std::vector<PointStats> point_stats(const SweepSpec& spec, const std::vector<SweepRow>& rows) {
  std::vector<PointStats> out(spec.points());
  std::vector<std::vector<const SweepRow*>> by_point(spec.points());
  for (const auto& r : rows) {
    if (r.status == RunStatus::ok) by_point[r.point].push_back(&r);
  }
  for (std::size_t p = 0; p < out.size(); ++p) {
    const auto& group = by_point[p];
    if (group.empty()) continue;
    PointStats s{0, 0, 0, 0, 0, 0, group.size()};
    std::size_t lw_n = 0, lock_n = 0;
    for (const SweepRow* r : group) {
      const auto& t = r->summary.temperature;
      s.t_x += t.t_x;
      s.t_full += t.t_full;
      s.stderr_x += t.stderr_x * t.stderr_x;
      s.stderr_full += t.stderr_full * t.stderr_full;
      if (r->summary.linewidth_hz() > 0.0) {
        s.linewidth_hz += r->summary.linewidth_hz();
        ++lw_n;
      }
      if (r->summary.lock_fraction) {
        s.lock_fraction += *r->summary.lock_fraction;
        ++lock_n;
      }
    }
    const double n = static_cast<double>(group.size());
    s.t_x /= n;
    s.t_full /= n;
    s.stderr_x = std::sqrt(s.stderr_x) / n;
    s.stderr_full = std::sqrt(s.stderr_full) / n;
    s.linewidth_hz = lw_n ? s.linewidth_hz / static_cast<double>(lw_n) : kNaN;
    s.lock_fraction = lock_n ? s.lock_fraction / static_cast<double>(lock_n) : kNaN;
    out[p] = s;
  }
  return out;
}

struct FigureContext {
  std::string id;
  Json preset;
  const ReproduceOptions& options;
  std::vector<fs::path> written;

  fs::path path(const std::string& file) {
    fs::path p = options.out_dir / file;
    written.push_back(p);
    return p;
  }

  Json require(const std::string& key) const {
    if (!preset.contains(key)) {
      throw ValidationError(fmt::format("preset {}: missing \"{}\"", id, key));
    }
    return preset[key];
  }

  std::vector<double> numbers(const std::string& key) const {
    const Json v = require(key);
    if (!v.is_array() || v.empty()) {
      throw ValidationError(fmt::format("preset {}: \"{}\" must be a non-empty array", id, key));
    }
    std::vector<double> out;
    for (const auto& x : v) out.push_back(x.get<double>());
    return out;
  }

  /// Base config with durations scaled and the master seed applied.
  Json base(const std::string& key = "base") const {
    Json b = require(key);
    const double k = options.duration_scale;
    if (k != 1.0) {
      for (const char* path : {"simulation.duration_s", "simulation.transient_s"}) {
        if (auto v = get_json_path(b, path)) set_json_path(b, path, v->get<double>() * k);
      }
    }
    return b;
  }

  std::uint64_t master_seed() const {
    if (options.seed) return *options.seed;
    return preset.value("master_seed", std::uint64_t{1});
  }

  SweepSpec sweep(Json base_cfg, std::vector<SweepAxis> axes, bool zip = false) const {
    SweepSpec s;
    s.name = id;
    s.base = std::move(base_cfg);
    s.axes = std::move(axes);
    s.zip = zip;
    s.replicates = preset.value("replicates", std::size_t{1});
    s.master_seed = master_seed();
    s.validate();
    return s;
  }

  std::vector<SweepRow> run(const SweepSpec& spec, const std::string& csv_name) {
    auto rows = run_sweep(spec, options.jobs, options.progress);
    auto out = open_output(path(csv_name));
    write_sweep_csv(out, spec, rows);
    return rows;
  }
};

std::vector<Json> to_json_values(const std::vector<double>& v) {
  return std::vector<Json>(v.begin(), v.end());
}


theory::TheoryInputs inputs_from(const Json& base) {
  Json probe = base;
  if (probe.contains("controller")) probe["controller"] = Json{{"type", "none"}};
  return theory_inputs(parse_run_config(probe));
}

void figure_fig4a(FigureContext& ctx) {
  const auto gammas = ctx.numbers("gamma_fb_hz");
  const Json methods = ctx.preset.value("methods", Json::array({"filter", "delayed"}));
  const Json base = ctx.base();
  SweepSpec spec = ctx.sweep(base, {{"controller.method", methods.get<std::vector<Json>>()},
                                    {"controller.gamma_fb_hz", to_json_values(gammas)}});
  const auto rows = ctx.run(spec, "fig4a_sweep.csv");
  const auto stats = point_stats(spec, rows);

  auto in = inputs_from(base);
  Table t{{"gamma_fb_hz", "T_sim_filter", "T_sim_delayed", "T_eq12", "T_term1", "T_term2",
           "stderr_filter", "stderr_delayed", "T_x_filter", "T_x_delayed"},
          {}};
  const std::size_t n = gammas.size();
  auto find_method = [&](const std::string& m) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < methods.size(); ++i) {
      if (methods[i] == m) return i;
    }
    return std::nullopt;
  };
  const auto fi = find_method("filter");
  const auto di = find_method("delayed");
  for (std::size_t g = 0; g < n; ++g) {
    in.gamma_fb = hz_to_rad(gammas[g]);
    const auto th = theory::vd_temperature_terms(in);
    const PointStats none;
    const PointStats& f = fi ? stats[*fi * n + g] : none;
    const PointStats& d = di ? stats[*di * n + g] : none;
    t.rows.push_back({gammas[g], f.t_full, d.t_full, th.total, th.thermal, th.noise, f.stderr_full,
                      d.stderr_full, f.t_x, d.t_x});
  }
  t.write(ctx.path("fig4a.csv"));

  in.gamma_fb.reset();
  const auto opt = theory::vd_optimum(in);
  write_json(ctx.path("fig4a_theory.json"),
             Json{{"gamma_fb_opt_hz", rad_to_hz(opt.gamma_fb)}, {"T_min", opt.t_min}});
}

/// Per bandwidth, a G grid expressed relative to G_lim and clipped at the
/// largest permitted depth, with the per-bandwidth optimum.
struct GainScan {
  std::vector<double> bandwidths_hz;
  std::vector<std::vector<double>> gains;  // [b][k]
  std::vector<std::vector<PointStats>> stats;
  std::vector<std::size_t> best;  // index into gains[b], or npos
};

GainScan scan_gains(FigureContext& ctx, const Json& base, const std::string& csv_name) {
  GainScan scan;
  scan.bandwidths_hz = ctx.numbers("b3db_hz");
  const auto rel = ctx.numbers("g_over_glim");
  const double max_g = std::min(ctx.preset.value("max_modulation_depth", 0.95),
                                parse_run_config(base).effective_pll().modulation_cap);
  const auto in = inputs_from(base);

  std::vector<Json> b_values, g_values;
  for (double b : scan.bandwidths_hz) {
    std::vector<double> gs;
    const double glim = 2.0 * hz_to_rad(b) / in.omega0;
    for (double k : rel) {
      const double g = std::min(k * glim, max_g);
      if (gs.empty() || g > gs.back()) gs.push_back(g);
    }
    for (double g : gs) {
      b_values.push_back(b);
      g_values.push_back(g);
    }
    scan.gains.push_back(gs);
  }
  SweepSpec spec = ctx.sweep(base, {{"controller.b3db_hz", b_values},
                                    {"controller.modulation_depth", g_values}},
                             /*zip=*/true);
  const auto rows = ctx.run(spec, csv_name);
  const auto stats = point_stats(spec, rows);

  std::size_t p = 0;
  for (const auto& gs : scan.gains) {
    std::vector<PointStats> s(stats.begin() + static_cast<long>(p),
                              stats.begin() + static_cast<long>(p + gs.size()));
    p += gs.size();
    std::size_t best = std::string::npos;
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (std::isfinite(s[k].t_full) && (best == std::string::npos || s[k].t_full < s[best].t_full)) {
        best = k;
      }
    }
    scan.best.push_back(best);
    scan.stats.push_back(std::move(s));
  }
  return scan;
}

void figure_fig4b(FigureContext& ctx) {
  const Json base = ctx.base();
  const auto in = inputs_from(base);
  const GainScan scan = scan_gains(ctx, base, "fig4b_sweep.csv");
  std::optional<GainScan> improved;
  if (ctx.preset.contains("improved_base")) {
    improved = scan_gains(ctx, ctx.base("improved_base"), "fig4b_improved_sweep.csv");
  }

  Table t{{"b3db_hz", "g_opt", "T_sim", "stderr", "linewidth_hz", "lock_fraction", "T_lim1",
           "T_lim2", "g_lim"},
          {}};
  if (improved) {
    t.columns.push_back("g_opt_improved");
    t.columns.push_back("T_improved");
    t.columns.push_back("stderr_improved");
  }
  for (std::size_t b = 0; b < scan.bandwidths_hz.size(); ++b) {
    const auto lim = theory::pll_limits_at_bandwidth(in, hz_to_rad(scan.bandwidths_hz[b]));
    std::vector<double> row{scan.bandwidths_hz[b], kNaN, kNaN, kNaN, kNaN, kNaN, lim.t_lim1, lim.t_lim2, lim.g_lim};
    if (scan.best[b] != std::string::npos) {
      const auto& s = scan.stats[b][scan.best[b]];
      row[1] = scan.gains[b][scan.best[b]];
      row[2] = s.t_full;
      row[3] = s.stderr_full;
      row[4] = s.linewidth_hz;
      row[5] = s.lock_fraction;
    }
    if (improved) {
      if (improved->best[b] != std::string::npos) {
        const auto& s = improved->stats[b][improved->best[b]];
        row.insert(row.end(), {improved->gains[b][improved->best[b]], s.t_full, s.stderr_full});
      } else {
        row.insert(row.end(), {kNaN, kNaN, kNaN});
      }
    }
    t.rows.push_back(row);
  }
  t.write(ctx.path("fig4b.csv"));

  const auto opt = theory::pll_optimum(in);
  write_json(ctx.path("fig4b_theory.json"),
             Json{{"b3db_opt_hz", rad_to_hz(opt.b3db)}, {"T_min", opt.t_min}});
}

void figure_fig2b(FigureContext& ctx, bool emit_fit) {
  const Json base = ctx.base();
  const auto in = inputs_from(base);
  const GainScan scan = scan_gains(ctx, base, "fig2b_sweep.csv");

  Table all{{"b3db_hz", "g", "g_over_glim", "T_full", "stderr", "linewidth_hz", "lock_fraction"}, {}};
  Table best{{"b3db_hz", "g_opt", "g_lim", "T_opt", "stderr", "linewidth_hz"}, {}};
  std::vector<double> fx, fy;
  const std::size_t fit_points = ctx.preset.value("fit_points", std::size_t{4});
  for (std::size_t b = 0; b < scan.bandwidths_hz.size(); ++b) {
    const double bw = scan.bandwidths_hz[b];
    const double glim = 2.0 * hz_to_rad(bw) / in.omega0;
    for (std::size_t k = 0; k < scan.gains[b].size(); ++k) {
      const auto& s = scan.stats[b][k];
      all.rows.push_back({bw, scan.gains[b][k], scan.gains[b][k] / glim, s.t_full, s.stderr_full,
                          s.linewidth_hz, s.lock_fraction});
    }
    if (scan.best[b] == std::string::npos) continue;
    const auto& s = scan.stats[b][scan.best[b]];
    best.rows.push_back({bw, scan.gains[b][scan.best[b]], glim, s.t_full, s.stderr_full, s.linewidth_hz});
    if (fx.size() < fit_points && std::isfinite(s.linewidth_hz)) {
      fx.push_back(bw);
      fy.push_back(s.linewidth_hz);
    }
  }
  if (!emit_fit) {
    all.write(ctx.path("fig2b.csv"));
    best.write(ctx.path("fig2b_optimum.csv"));
    return;
  }
  Table c{{"b3db_hz", "linewidth_hz"}, {}};
  for (const auto& r : best.rows) c.rows.push_back({r[0], r[5]});
  c.write(ctx.path("fig2c.csv"));
  Json fit{{"points", fx.size()}};
  if (fx.size() >= 2) {
    const auto line = fit_line(fx, fy);
    fit["gradient"] = line.slope;
    fit["intercept_hz"] = line.intercept;
  }
  write_json(ctx.path("fig2c_fit.json"), fit);
}

void figure_fig2a(FigureContext& ctx) {
  const Json base = ctx.base();
  const auto zetas = ctx.numbers("zeta");
  const auto wns = ctx.numbers("omega_n_hz");
  SweepSpec grid = ctx.sweep(base, {{"controller.zeta", to_json_values(zetas)},
                                    {"controller.omega_n_hz", to_json_values(wns)}});
  const auto rows = ctx.run(grid, "fig2a_sweep.csv");
  const auto stats = point_stats(grid, rows);
  Table heat{{"zeta", "omega_n_hz", "b3db_hz", "T_full", "stderr", "lock_fraction"}, {}};
  for (std::size_t p = 0; p < grid.points(); ++p) {
    const auto v = grid.point_values(p);
    const double z = v[0].get<double>(), w = v[1].get<double>();
    heat.rows.push_back({z, w, rad_to_hz(pll_b3db(hz_to_rad(w), z)), stats[p].t_full,
                         stats[p].stderr_full, stats[p].lock_fraction});
  }
  heat.write(ctx.path("fig2a.csv"));

  if (ctx.preset.contains("contour_b3db_hz")) {
    const double b = ctx.preset["contour_b3db_hz"].get<double>();
    const auto cz = ctx.numbers("contour_zeta");
    Json cbase = base;
    if (cbase.contains("controller")) cbase["controller"].erase("omega_n_hz");
    set_json_path(cbase, "controller.b3db_hz", b);
    SweepSpec contour = ctx.sweep(cbase, {{"controller.zeta", to_json_values(cz)}});
    const auto crows = ctx.run(contour, "fig2a_contour_sweep.csv");
    const auto cstats = point_stats(contour, crows);
    Table line{{"zeta", "omega_n_hz", "b3db_hz", "T_full", "stderr"}, {}};
    for (std::size_t p = 0; p < cz.size(); ++p) {
      line.rows.push_back({cz[p], rad_to_hz(pll_omega_n_for_b3db(hz_to_rad(b), cz[p])), b,
                           cstats[p].t_full, cstats[p].stderr_full});
    }
    line.write(ctx.path("fig2a_contour.csv"));
  }
}

void figure_fig5(FigureContext& ctx) {
  const Json runs = ctx.require("runs");
  if (!runs.is_array() || runs.empty()) throw ValidationError("preset fig5: runs must be non-empty");
  Table summary{{"index", "T_eff", "T_theory", "relative_error", "ks_statistic", "ks_threshold",
                 "ks_pvalue", "samples", "T_full", "stderr_full"},
                {}};
  Json labels = Json::array();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const std::string label = runs[i].value("label", fmt::format("run{}", i));
    Json cfg_json = runs[i].at("config");
    const double k = ctx.options.duration_scale;
    for (const char* path : {"simulation.duration_s", "simulation.transient_s"}) {
      if (auto v = get_json_path(cfg_json, path)) set_json_path(cfg_json, path, v->get<double>() * k);
    }
    set_json_path(cfg_json, "simulation.seed", derive_seed(ctx.master_seed(), i));
    cfg_json.erase("output");
    const RunConfig cfg = parse_run_config(cfg_json);
    const RunResult r = simulate(cfg, {true, false});
    if (ctx.options.progress) ctx.options.progress(i + 1, runs.size());
    const auto& s = r.summary;
    labels.push_back(label);
    if (!s.energy) {
      summary.rows.push_back({static_cast<double>(i), kNaN, kNaN, kNaN, kNaN, kNaN, kNaN, 0.0,
                              s.temperature.t_full, s.temperature.stderr_full});
      continue;
    }
    const auto in = theory_inputs(cfg);
    const auto scheme = scheme_of(cfg.controller);
    const double t_th = theory::effective_temperature(scheme, in);
    auto out = open_output(ctx.path(fmt::format("fig5_{}.csv", label)));
    write_histogram_csv(out, *s.energy, [&](double e) { return theory::energy_pdf(scheme, in, e); });
    if (s.measured_energy) {
      auto m = open_output(ctx.path(fmt::format("fig5_{}_measured.csv", label)));
      write_histogram_csv(m, *s.measured_energy);
    }
    const auto& e = *s.energy;
    summary.rows.push_back({static_cast<double>(i), e.t_eff, t_th, e.t_eff / t_th - 1.0,
                            e.ks_statistic, e.ks_threshold, e.ks_pvalue,
                            static_cast<double>(e.samples), s.temperature.t_full,
                            s.temperature.stderr_full});
  }
  summary.write(ctx.path("fig5_summary.csv"));
  write_json(ctx.path("fig5_labels.json"), labels);
}

}  // namespace

std::vector<fs::path> reproduce(const std::string& figure, const ReproduceOptions& options) {
  const auto& ids = figure_ids();
  if (std::find(ids.begin(), ids.end(), figure) == ids.end()) {
    throw ValidationError(fmt::format("unknown figure id \"{}\" (known: {})", figure,
                                      fmt::join(ids, ", ")));
  }
  if (!(options.duration_scale > 0.0)) throw ValidationError("duration scale must be > 0");
  ensure_directory(options.out_dir);
  const std::string preset_name = figure == "fig2c" ? "fig2b" : figure;
  FigureContext ctx{figure, read_json_file(options.preset_dir / (preset_name + ".json")), options, {}};

  if (figure == "fig2a") figure_fig2a(ctx);
  else if (figure == "fig2b") figure_fig2b(ctx, false);
  else if (figure == "fig2c") figure_fig2b(ctx, true);
  else if (figure == "fig4a") figure_fig4a(ctx);
  else if (figure == "fig4b") figure_fig4b(ctx);
  else figure_fig5(ctx);

  Json manifest{{"tool", "cool-sim"},
                {"version", LEVCOOL_VERSION},
                {"figure", figure},
                {"preset", ctx.preset},
                {"preset_hash", config_hash(ctx.preset)},
                {"master_seed", ctx.master_seed()},
                {"duration_scale", options.duration_scale}};
  Json files = Json::array();
  for (const auto& p : ctx.written) files.push_back(p.filename().string());
  manifest["artifacts"] = files;
  const fs::path mpath = options.out_dir / (figure + "_manifest.json");
  write_json(mpath, manifest);
  ctx.written.push_back(mpath);
  return ctx.written;
}

}  // namespace levcool
