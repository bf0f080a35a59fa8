// cool-sim: command-line front end for the levitated-particle cooling toolkit.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "levcool/config.hpp"
#include "levcool/errors.hpp"
#include "levcool/harness.hpp"
#include "levcool/pll.hpp"
#include "levcool/theory.hpp"
#include "levcool/units.hpp"

namespace fs = std::filesystem;
using namespace levcool;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitFault = 2;

Json parse_override_value(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error&) {
    return Json(text);
  }
}

void apply_overrides(Json& doc, const std::vector<std::string>& sets) {
  ProblemList p;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      p.add(fmt::format("--set expects path=value, got \"{}\"", s));
      continue;
    }
    set_json_path(doc, s.substr(0, eq), parse_override_value(s.substr(eq + 1)));
  }
  p.throw_if_any();
}

void print_progress(std::size_t done, std::size_t total) {
  std::cerr << fmt::format("\r  {}/{} runs", done, total) << (done == total ? "\n" : "") << std::flush;
}

struct Common {
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned jobs = 1;
};

void add_common(CLI::App* cmd, Common& c, bool with_jobs) {
  cmd->add_option("--seed", c.seed, "Master seed (overrides the file)");
  cmd->add_option("--out", c.out, "Output directory");
  if (with_jobs) cmd->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

int cmd_run(const std::string& path, const std::vector<std::string>& sets, const Common& c) {
  Json doc = read_json_file(path);
  apply_overrides(doc, sets);
  if (c.seed) set_json_path(doc, "simulation.seed", *c.seed);
  const RunConfig cfg = parse_run_config(doc);
  fs::path out = !c.out.empty() ? fs::path(c.out)
                 : !cfg.output.directory.empty() ? cfg.output.directory
                                                 : fs::path("out") / cfg.name;
  const RunSummary s = run_single(cfg, out);
  const auto& t = s.temperature;
  std::cout << fmt::format("{}: T_x = {:.6g} +/- {:.2g} K, T_full = {:.6g} +/- {:.2g} K", s.name,
                           t.t_x, t.stderr_x, t.t_full, t.stderr_full);
  if (s.linewidth_hz() > 0.0) std::cout << fmt::format(", linewidth = {:.4g} Hz", s.linewidth_hz());
  if (s.lock_fraction) std::cout << fmt::format(", lock = {:.3f}", *s.lock_fraction);
  std::cout << "\n  artifacts in " << out.string() << "\n";
  return kExitOk;
}

int cmd_sweep(const std::string& path, const Common& c) {
  SweepSpec spec = load_sweep_spec(path);
  if (c.seed) spec.master_seed = *c.seed;
  const fs::path out = c.out.empty() ? fs::path("out") : fs::path(c.out);
  fs::create_directories(out);
  const auto rows = run_sweep(spec, c.jobs, print_progress);
  {
    std::ofstream csv(out / (spec.name + ".csv"));
    if (!csv) throw std::runtime_error("cannot write sweep table");
    write_sweep_csv(csv, spec, rows);
  }
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.status != RunStatus::ok;
  Json manifest{{"tool", "cool-sim"},
                {"version", LEVCOOL_VERSION},
                {"sweep", read_json_file(path)},
                {"master_seed", spec.master_seed},
                {"runs", rows.size()},
                {"failed", failed},
                {"artifacts", {spec.name + ".csv"}}};
  std::ofstream(out / (spec.name + "_manifest.json")) << manifest.dump(2) << "\n";
  std::cout << fmt::format("{}: {} runs, {} failed -> {}\n", spec.name, rows.size(), failed,
                           (out / (spec.name + ".csv")).string());
  return kExitOk;
}

struct TheoryArgs {
  std::string kind;
  std::string config;
  std::optional<double> gamma_fb_hz;
  std::optional<double> b3db_hz;
  std::optional<double> zeta;
  std::optional<double> omega_n_hz;
  std::optional<double> modulation_depth;
  std::optional<double> cutoff_hz;
  std::optional<double> energy_joule;
  std::string scheme = "velocity";
  // Paul trap
  double u0 = 0.0, v0 = 0.0, rf_hz = 0.0, charge_to_mass = 0.0;
  double r0_mm = 1.1, z0_mm = 3.5, kappa = 0.071, eta = 0.82;
};

theory::TheoryInputs theory_base(const TheoryArgs& a) {
  if (a.config.empty()) return theory::reference_inputs();
  return theory_inputs(load_run_config(a.config));
}

double need(const std::optional<double>& v, const char* flag) {
  if (!v) throw ValidationError(fmt::format("{} is required for this theory query", flag));
  return *v;
}

int cmd_theory(const TheoryArgs& a, const Common& c) {
  Json out;
  auto in = theory_base(a);
  out["inputs"] = {{"mass_kg", in.mass},
                   {"omega0_rad_s", in.omega0},
                   {"gamma0_rad_s", in.gamma0},
                   {"temperature_k", in.temperature},
                   {"noise_psd_m2_per_hz", in.noise_psd}};
  if (a.kind == "vd") {
    in.gamma_fb = hz_to_rad(need(a.gamma_fb_hz, "--gamma-fb-hz"));
    const auto t = theory::vd_temperature_terms(in);
    out["T"] = t.total;
    out["T_thermal_term"] = t.thermal;
    out["T_noise_term"] = t.noise;
  } else if (a.kind == "vd-optimum") {
    const auto o = theory::vd_optimum(in);
    out["gamma_fb_opt_hz"] = rad_to_hz(o.gamma_fb);
    out["T_min"] = o.t_min;
  } else if (a.kind == "pll-limits") {
    theory::PllLimits l{};
    if (a.zeta && a.omega_n_hz) {
      in.zeta = *a.zeta;
      in.omega_n = hz_to_rad(*a.omega_n_hz);
      l = theory::pll_limits(in);
    } else {
      l = theory::pll_limits_at_bandwidth(in, hz_to_rad(need(a.b3db_hz, "--b3db-hz")));
    }
    out["b3db_hz"] = rad_to_hz(l.b3db);
    out["g_lim"] = l.g_lim;
    out["T_lim1"] = l.t_lim1;
    out["T_lim2"] = l.t_lim2;
    out["noise_bandwidth_hz"] = l.b_l_hz;
  } else if (a.kind == "pll-optimum") {
    const auto o = theory::pll_optimum(in);
    out["b3db_opt_hz"] = rad_to_hz(o.b3db);
    out["T_min"] = o.t_min;
  } else if (a.kind == "energy-pdf") {
    theory::Scheme scheme = theory::Scheme::thermal;
    if (a.scheme == "velocity") {
      scheme = theory::Scheme::velocity_damping;
      in.gamma_fb = hz_to_rad(need(a.gamma_fb_hz, "--gamma-fb-hz"));
    } else if (a.scheme == "pll") {
      scheme = theory::Scheme::pll;
      in.modulation_depth = need(a.modulation_depth, "--modulation-depth");
    } else if (a.scheme != "thermal") {
      throw ValidationError("--scheme must be thermal, velocity or pll");
    }
    out["T_eff"] = theory::effective_temperature(scheme, in);
    if (a.energy_joule) out["pdf_per_joule"] = theory::energy_pdf(scheme, in, *a.energy_joule);
  } else if (a.kind == "variance") {
    const double g = hz_to_rad(need(a.gamma_fb_hz, "--gamma-fb-hz"));
    const double cutoff = hz_to_rad(need(a.cutoff_hz, "--cutoff-hz"));
    const auto v = theory::variance_xp(in, g, cutoff);
    out["x_var_m2"] = v.x_var;
    out["p_var"] = v.p_var;
    out["T_x"] = in.mass * in.omega0 * in.omega0 * v.x_var / kBoltzmann;
    out["T_p"] = v.p_var / (in.mass * kBoltzmann);
    out["x_var_closed_form_m2"] = theory::position_variance_closed_form(in, g);
  } else if (a.kind == "trap") {
    theory::TrapParams trap;
    trap.u0 = a.u0;
    trap.v0 = a.v0;
    trap.omega_rf = hz_to_rad(a.rf_hz);
    trap.charge_to_mass = a.charge_to_mass;
    trap.r0 = a.r0_mm * 1e-3;
    trap.z0 = a.z0_mm * 1e-3;
    trap.kappa = a.kappa;
    trap.eta = a.eta;
    const auto f = theory::paul_trap_frequencies(trap);
    out.erase("inputs");
    out["q_x"] = f.q_x;
    out["a_x"] = f.a_x;
    out["a_z"] = f.a_z;
    out["f_x_hz"] = rad_to_hz(f.omega_x);
    out["f_y_hz"] = rad_to_hz(f.omega_y);
    out["f_z_hz"] = rad_to_hz(f.omega_z);
    out["stability_ok"] = f.stability_ok;
  } else {
    throw ValidationError(fmt::format(
        "unknown theory query \"{}\" (vd, vd-optimum, pll-limits, pll-optimum, energy-pdf, "
        "variance, trap)",
        a.kind));
  }
  const std::string text = out.dump(2);
  std::cout << text << "\n";
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    std::ofstream(fs::path(c.out) / fmt::format("theory_{}.json", a.kind)) << text << "\n";
  }
  return kExitOk;
}

int cmd_reproduce(const std::string& figure, const std::string& preset_dir, double scale,
                  const Common& c) {
  ReproduceOptions o;
  if (!preset_dir.empty()) o.preset_dir = preset_dir;
  o.out_dir = c.out.empty() ? fs::path("out") : fs::path(c.out);
  o.jobs = c.jobs;
  o.seed = c.seed;
  o.duration_scale = scale;
  o.progress = print_progress;
  std::vector<std::string> figures;
  if (figure == "all") figures = figure_ids();
  else figures.push_back(figure);
  for (const auto& f : figures) {
    std::cerr << f << "\n";
    for (const auto& p : reproduce(f, o)) std::cout << p.string() << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cool-sim: feedback cooling of a levitated nanoparticle"};
  app.set_version_flag("--version", std::string(LEVCOOL_VERSION));
  app.require_subcommand(1);

  Common common;
  std::string run_config;
  std::vector<std::string> sets;
  auto* run = app.add_subcommand("run", "Run one simulation from a JSON config");
  run->add_option("config", run_config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--set", sets, "Override a config value, e.g. controller.gamma_fb_hz=20");
  add_common(run, common, false);

  std::string sweep_spec;
  auto* sweep = app.add_subcommand("sweep", "Run a parameter sweep from a JSON spec");
  sweep->add_option("spec", sweep_spec, "Sweep spec (JSON)")->required()->check(CLI::ExistingFile);
  add_common(sweep, common, true);

  TheoryArgs targs;
  auto* th = app.add_subcommand("theory", "Evaluate closed-form predictions");
  th->add_option("kind", targs.kind,
                 "vd | vd-optimum | pll-limits | pll-optimum | energy-pdf | variance | trap")
      ->required();
  th->add_option("--config", targs.config, "Take system parameters from a run config");
  th->add_option("--gamma-fb-hz", targs.gamma_fb_hz, "Feedback damping / 2 pi");
  th->add_option("--b3db-hz", targs.b3db_hz, "PLL 3 dB bandwidth / 2 pi");
  th->add_option("--zeta", targs.zeta, "PLL damping factor");
  th->add_option("--omega-n-hz", targs.omega_n_hz, "PLL natural frequency / 2 pi");
  th->add_option("--modulation-depth", targs.modulation_depth, "PLL modulation depth G");
  th->add_option("--cutoff-hz", targs.cutoff_hz, "Integration cutoff / 2 pi");
  th->add_option("--energy", targs.energy_joule, "Energy (J) for energy-pdf");
  th->add_option("--scheme", targs.scheme, "thermal | velocity | pll");
  th->add_option("--u0", targs.u0, "Endcap DC voltage (V)");
  th->add_option("--v0", targs.v0, "RF amplitude (V)");
  th->add_option("--rf-hz", targs.rf_hz, "RF drive frequency (Hz)");
  th->add_option("--charge-to-mass", targs.charge_to_mass, "Charge-to-mass ratio (C/kg)");
  th->add_option("--r0-mm", targs.r0_mm, "Rod distance (mm)");
  th->add_option("--z0-mm", targs.z0_mm, "Endcap distance (mm)");
  th->add_option("--kappa", targs.kappa, "Endcap geometry factor");
  th->add_option("--eta", targs.eta, "Rod geometry factor");
  add_common(th, common, false);

  std::string figure;
  std::string preset_dir;
  double scale = 1.0;
  auto* rep = app.add_subcommand("reproduce", "Emit the data behind a figure");
  rep->add_option("figure", figure, "fig2a | fig2b | fig2c | fig4a | fig4b | fig5 | all")->required();
  rep->add_option("--preset-dir", preset_dir, "Directory holding the sweep presets");
  rep->add_option("--duration-scale", scale, "Scale every simulated duration")
      ->check(CLI::PositiveNumber);
  add_common(rep, common, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*run) return cmd_run(run_config, sets, common);
    if (*sweep) return cmd_sweep(sweep_spec, common);
    if (*th) return cmd_theory(targs, common);
    if (*rep) return cmd_reproduce(figure, preset_dir, scale, common);
  } catch (const ValidationError& e) {
    std::cerr << "invalid input:\n";
    for (const auto& p : e.problems()) std::cerr << "  - " << p << "\n";
    return kExitValidation;
  } catch (const SimulationFault& e) {
    std::cerr << "simulation fault: " << e.what() << "\n";
    return kExitFault;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFault;
  }
  return kExitOk;
}
