#include "levcool/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "levcool/errors.hpp"
#include "levcool/units.hpp"

namespace levcool {
namespace {

/// Walks one JSON object, records which keys were read and reports type
/// errors and leftovers into a shared ProblemList.
class Reader {
 public:
  Reader(const Json* obj, std::string prefix, ProblemList& problems)
      : obj_(obj), prefix_(std::move(prefix)), problems_(problems) {
    if (obj_ && !obj_->is_object()) {
      problems_.add(fmt::format("{} must be an object", where()));
      obj_ = nullptr;
    }
  }

  bool present() const { return obj_ != nullptr; }
  bool has(const std::string& key) const { return obj_ && obj_->contains(key); }

  std::optional<double> number(const std::string& key) {
    const Json* v = fetch(key);
    if (!v) return std::nullopt;
    if (!v->is_number()) {
      problems_.add(fmt::format("{} must be a number", path(key)));
      return std::nullopt;
    }
    const double d = v->get<double>();
    if (!std::isfinite(d)) {
      problems_.add(fmt::format("{} must be finite", path(key)));
      return std::nullopt;
    }
    return d;
  }
  double number(const std::string& key, double fallback) { return number(key).value_or(fallback); }

  std::optional<std::uint64_t> count(const std::string& key) {
    const Json* v = fetch(key);
    if (!v) return std::nullopt;
    if (v->is_number_unsigned()) return v->get<std::uint64_t>();
    if (v->is_number_integer() && v->get<std::int64_t>() >= 0) {
      return static_cast<std::uint64_t>(v->get<std::int64_t>());
    }
    problems_.add(fmt::format("{} must be a non-negative integer", path(key)));
    return std::nullopt;
  }
  std::uint64_t count(const std::string& key, std::uint64_t fallback) {
    return count(key).value_or(fallback);
  }

  bool flag(const std::string& key, bool fallback) {
    const Json* v = fetch(key);
    if (!v) return fallback;
    if (!v->is_boolean()) {
      problems_.add(fmt::format("{} must be true or false", path(key)));
      return fallback;
    }
    return v->get<bool>();
  }

  std::optional<std::string> text(const std::string& key) {
    const Json* v = fetch(key);
    if (!v) return std::nullopt;
    if (!v->is_string()) {
      problems_.add(fmt::format("{} must be a string", path(key)));
      return std::nullopt;
    }
    return v->get<std::string>();
  }

  Reader child(const std::string& key) { return Reader(fetch(key), path(key), problems_); }

  const Json* raw(const std::string& key) { return fetch(key); }

  std::string path(const std::string& key) const {
    return prefix_.empty() ? key : prefix_ + "." + key;
  }

  /// Reports keys nobody asked for.
  void finish() const {
    if (!obj_) return;
    for (auto it = obj_->begin(); it != obj_->end(); ++it) {
      if (!used_.count(it.key())) problems_.add(fmt::format("{}: unknown key", path(it.key())));
    }
  }

  ProblemList& problems() { return problems_; }

 private:
  const Json* fetch(const std::string& key) {
    used_.insert(key);
    if (!obj_) return nullptr;
    auto it = obj_->find(key);
    if (it == obj_->end() || it->is_null()) return nullptr;
    return &*it;
  }
  std::string where() const { return prefix_.empty() ? "config" : prefix_; }

  const Json* obj_;
  std::string prefix_;
  ProblemList& problems_;
  std::set<std::string> used_;
};

void parse_particle(Reader r, ParticleParams& p) {
  p.radius = nm_to_m(r.number("radius_nm", 193.5));
  p.density = r.number("density_kg_m3", p.density);
  if (auto m = r.number("mass_kg")) p.mass_override = *m;
  p.charge = r.number("charge", p.charge);
  r.finish();
}

void parse_bath(Reader r, BathParams& b) {
  b.temperature = r.number("temperature_k", b.temperature);
  b.pressure = mbar_to_pa(r.number("pressure_mbar", pa_to_mbar(b.pressure)));
  b.gas_molecular_mass = r.number("gas_molecular_mass_kg", b.gas_molecular_mass);
  r.finish();
}

void parse_oscillator(Reader r, OscillatorParams& o) {
  o.omega0 = hz_to_rad(r.number("frequency_hz", 277.0));
  o.offset_force = r.number("offset_force_n", 0.0);
  Reader d = r.child("drift");
  if (d.present()) {
    FrequencyDrift drift;
    drift.depth = d.number("depth", 0.0);
    drift.rate = hz_to_rad(d.number("rate_hz", 0.0));
    d.finish();
    o.drift = drift;
  }
  r.finish();
}

void parse_detection(Reader r, DetectionModel& det) {
  det.noise_psd = r.number("noise_psd_m2_per_hz", 0.0);
  det.include_second_harmonics = r.flag("second_harmonics", false);
  det.harmonic_fraction = r.number("harmonic_fraction", det.harmonic_fraction);
  if (const Json* modes = r.raw("spurious_modes")) {
    if (!modes->is_array()) {
      r.problems().add(r.path("spurious_modes") + " must be an array");
    } else {
      for (std::size_t i = 0; i < modes->size(); ++i) {
        Reader m(&(*modes)[i], fmt::format("{}[{}]", r.path("spurious_modes"), i), r.problems());
        SpuriousMode mode;
        auto f = m.number("frequency_hz");
        auto a = m.number("rms_amplitude_m");
        if (!f) r.problems().add(m.path("frequency_hz") + " is required");
        if (!a) r.problems().add(m.path("rms_amplitude_m") + " is required");
        mode.frequency = hz_to_rad(f.value_or(0.0));
        mode.rms_amplitude = a.value_or(0.0);
        m.finish();
        det.spurious_modes.push_back(mode);
      }
    }
  }
  r.finish();
}

void parse_velocity(Reader& r, VelocityDampingConfig& v, double omega0) {
  const std::string method = r.text("method").value_or("filter");
  if (method == "filter") {
    v.method = VelocityMethod::filter;
  } else if (method == "delayed") {
    v.method = VelocityMethod::delayed;
  } else {
    r.problems().add(fmt::format("{} must be \"filter\" or \"delayed\" (got \"{}\")",
                                 r.path("method"), method));
  }
  auto g = r.number("gamma_fb_hz");
  if (!g) r.problems().add(r.path("gamma_fb_hz") + " is required");
  v.gamma_fb = hz_to_rad(g.value_or(0.0));
  v.lowpass_cutoff_hz = r.number("lowpass_cutoff_hz", v.lowpass_cutoff_hz);
  v.omega0_assumed = r.has("assumed_frequency_hz") ? hz_to_rad(r.number("assumed_frequency_hz", 0.0))
                                                   : omega0;
  v.fractional_delay = r.flag("fractional_delay", false);
  Reader bp = r.child("bandpass");
  if (bp.present()) {
    BandpassSpec spec;
    spec.center_hz = bp.number("center_hz", rad_to_hz(omega0));
    spec.width_hz = bp.number("width_hz", 0.0);
    bp.finish();
    v.bandpass = spec;
  }
}

void parse_pll(Reader& r, PllConfig& c, double omega0) {
  c.zeta = r.number("zeta", c.zeta);
  const bool has_b = r.has("b3db_hz");
  const bool has_wn = r.has("omega_n_hz");
  if (has_b == has_wn) {
    r.problems().add(r.path("b3db_hz") + " or " + r.path("omega_n_hz") +
                     ": exactly one must be given");
  }
  if (has_wn) c.omega_n = hz_to_rad(r.number("omega_n_hz", 0.0));
  if (has_b) {
    const double b = hz_to_rad(r.number("b3db_hz", 0.0));
    c.omega_n = c.zeta > 0.0 && b > 0.0 ? pll_omega_n_for_b3db(b, c.zeta) : 0.0;
  }
  c.quad_bandwidth = hz_to_rad(r.number("quad_bandwidth_hz", 0.0));
  c.nco_center = r.has("nco_center_hz") ? hz_to_rad(r.number("nco_center_hz", 0.0)) : omega0;

  const bool has_g = r.has("modulation_depth");
  const bool has_rel = r.has("modulation_depth_over_glim");
  if (has_g && has_rel) {
    r.problems().add(r.path("modulation_depth") + " and " + r.path("modulation_depth_over_glim") +
                     " are mutually exclusive");
  }
  if (has_rel) {
    const double k = r.number("modulation_depth_over_glim", 0.0);
    const double b3db = c.omega_n > 0.0 && c.zeta > 0.0 ? pll_b3db(c.omega_n, c.zeta) : 0.0;
    c.modulation_depth = k * 2.0 * b3db / c.nco_center;
  } else {
    c.modulation_depth = r.number("modulation_depth", 0.0);
  }
  c.feedback_phase = r.number("feedback_phase_rad", 0.0);
  c.modulation_cap = r.number("modulation_cap", c.modulation_cap);
  if (auto lim = r.number("range_limit_hz")) c.range_limit = hz_to_rad(*lim);
  c.unwrap_error = r.flag("unwrap_error", false);
}

void parse_simulation(Reader r, SimConfig& sim, double omega0) {
  auto duration = r.number("duration_s");
  if (!duration) r.problems().add(r.path("duration_s") + " is required");
  sim.dt = r.number("dt_s", default_timestep(omega0));
  const double d = duration.value_or(0.0);
  sim.n_steps = sim.dt > 0.0 && d > 0.0 ? static_cast<std::uint64_t>(std::llround(d / sim.dt)) : 0;
  if (d < 0.0) r.problems().add(r.path("duration_s") + " must be >= 0");
  sim.seed = r.count("seed", 1);
  sim.transient_discard = r.number("transient_s", 0.0);
  sim.record_stride = r.count("record_stride", 1);
  sim.record_probes = r.flag("record_probes", true);
  if (const Json* init = r.raw("initial")) {
    if (init->is_string()) {
      const auto s = init->get<std::string>();
      if (s == "thermal") {
        sim.initial = InitialCondition::thermal;
      } else if (s == "rest") {
        sim.initial = InitialCondition::rest;
      } else {
        r.problems().add(fmt::format("{} must be \"thermal\", \"rest\" or {{\"x_m\", \"v_m_s\"}}",
                                     r.path("initial")));
      }
    } else {
      Reader st(init, r.path("initial"), r.problems());
      sim.initial = InitialCondition::explicit_state;
      sim.x0 = st.number("x_m", 0.0);
      sim.v0 = st.number("v_m_s", 0.0);
      st.finish();
    }
  }
  r.finish();
}

void parse_improved(Reader r, ImprovedModel& m) {
  m.freq_drift = r.flag("freq_drift", false);
  m.spurious_modes = r.flag("spurious_modes", false);
  m.offset_force = r.flag("offset_force", false);
  m.range_limit = r.flag("range_limit", false);
  m.modulation_cap = r.flag("modulation_cap", false);
  r.finish();
}

void parse_analysis(Reader r, AnalysisOptions& a) {
  a.segment_length = r.count("segment_length", 0);
  a.energy_bins = r.count("energy_bins", a.energy_bins);
  a.energy_spacing = r.number("energy_spacing", a.energy_spacing);
  a.min_energy_samples = r.count("min_energy_samples", a.min_energy_samples);
  a.measured_energy = r.flag("measured_energy", false);
  a.measured_bandwidth_hz = r.number("measured_bandwidth_hz", 0.0);
  r.finish();
}

void parse_output(Reader r, OutputOptions& o) {
  if (auto dir = r.text("directory")) o.directory = *dir;
  o.trace = r.flag("trace", o.trace);
  o.probes = r.flag("probes", o.probes);
  o.trace_stride = r.count("trace_stride", o.trace_stride);
  o.spectra = r.flag("spectra", o.spectra);
  o.histogram = r.flag("histogram", o.histogram);
  if (o.trace_stride == 0) r.problems().add(r.path("trace_stride") + " must be >= 1");
  r.finish();
}

template <class F>
void collect(ProblemList& p, F&& check) {
  try {
    check();
  } catch (const ValidationError& e) {
    p.merge(e);
  }
}

}  // namespace

const char* to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::none:
      return "none";
    case ControllerKind::velocity:
      return "velocity";
    case ControllerKind::pll:
      return "pll";
  }
  return "?";
}

SystemParams RunConfig::effective_params() const {
  SystemParams p = params;
  if (!improved.freq_drift) p.oscillator.drift.reset();
  if (!improved.offset_force) p.oscillator.offset_force = 0.0;
  return p;
}

DetectionModel RunConfig::effective_detection() const {
  DetectionModel d = detection;
  if (!improved.spurious_modes) {
    d.spurious_modes.clear();
    d.include_second_harmonics = false;
  }
  return d;
}

PllConfig RunConfig::effective_pll() const {
  PllConfig c = pll;
  if (!improved.range_limit) c.range_limit.reset();
  if (!improved.modulation_cap) c.modulation_cap = 1.0;
  return c;
}

void RunConfig::validate() const {
  ProblemList p;
  const SystemParams sys = effective_params();
  collect(p, [&] { sys.validate(); });
  collect(p, [&] { detection.validate(); });
  collect(p, [&] { sim.validate(sys.omega0()); });
  if (controller == ControllerKind::velocity) collect(p, [&] { velocity.validate(sim.dt); });
  if (controller == ControllerKind::pll) {
    collect(p, [&] { effective_pll().validate(); });
  }
  p.require(analysis.energy_bins >= 2, "analysis.energy_bins must be >= 2");
  p.require(analysis.energy_spacing > 0.0, "analysis.energy_spacing must be > 0");
  p.require(analysis.measured_bandwidth_hz >= 0.0, "analysis.measured_bandwidth_hz must be >= 0");
  p.require(output.trace_stride >= 1, "output.trace_stride must be >= 1");
  p.throw_if_any();
}

RunConfig parse_run_config(const Json& doc) {
  ProblemList problems;
  RunConfig cfg;
  cfg.source = doc;
  Reader root(&doc, "", problems);
  if (auto name = root.text("name")) cfg.name = *name;
  root.text("description");  // free-form, ignored

  parse_particle(root.child("particle"), cfg.params.particle);
  parse_bath(root.child("bath"), cfg.params.bath);
  parse_oscillator(root.child("oscillator"), cfg.params.oscillator);
  parse_detection(root.child("detection"), cfg.detection);
  const double omega0 = cfg.params.oscillator.omega0;

  Reader ctl = root.child("controller");
  const std::string type = ctl.text("type").value_or("none");
  if (type == "none") {
    cfg.controller = ControllerKind::none;
  } else if (type == "velocity") {
    cfg.controller = ControllerKind::velocity;
    parse_velocity(ctl, cfg.velocity, omega0);
  } else if (type == "pll") {
    cfg.controller = ControllerKind::pll;
    parse_pll(ctl, cfg.pll, omega0);
  } else {
    problems.add(fmt::format("controller.type must be \"none\", \"velocity\" or \"pll\" (got \"{}\")",
                             type));
  }
  ctl.finish();

  parse_simulation(root.child("simulation"), cfg.sim, omega0);
  if (!root.has("simulation")) problems.add("simulation: block is required");
  parse_improved(root.child("improved_model"), cfg.improved);
  parse_analysis(root.child("analysis"), cfg.analysis);
  parse_output(root.child("output"), cfg.output);
  root.finish();

  collect(problems, [&] { cfg.validate(); });
  problems.throw_if_any();
  return cfg;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open {}", path.string()));
  try {
    return Json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const Json::parse_error& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_json_file(path));
}

namespace {
std::vector<std::string> split_path(const std::string& dotted) {
  std::vector<std::string> parts;
  std::stringstream ss(dotted);
  std::string item;
  while (std::getline(ss, item, '.')) parts.push_back(item);
  if (parts.empty() || std::any_of(parts.begin(), parts.end(), [](auto& s) { return s.empty(); })) {
    throw ValidationError(fmt::format("malformed config path \"{}\"", dotted));
  }
  return parts;
}
}  // namespace

void set_json_path(Json& doc, const std::string& dotted_path, const Json& value) {
  const auto parts = split_path(dotted_path);
  Json* node = &doc;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    Json& next = (*node)[parts[i]];
    if (next.is_null()) next = Json::object();
    if (!next.is_object()) {
      throw ValidationError(fmt::format("config path \"{}\" crosses a non-object", dotted_path));
    }
    node = &next;
  }
  (*node)[parts.back()] = value;
}

std::optional<Json> get_json_path(const Json& doc, const std::string& dotted_path) {
  const Json* node = &doc;
  for (const auto& part : split_path(dotted_path)) {
    if (!node->is_object()) return std::nullopt;
    auto it = node->find(part);
    if (it == node->end()) return std::nullopt;
    node = &*it;
  }
  return *node;
}

std::string config_hash(const Json& doc) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : doc.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

}  // namespace levcool
