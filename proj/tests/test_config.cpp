#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "levcool/config.hpp"
#include "levcool/errors.hpp"
#include "levcool/harness.hpp"
#include "levcool/rng.hpp"
#include "levcool/units.hpp"

using namespace levcool;

namespace {

Json velocity_doc() {
  return Json::parse(R"({
    "name": "v",
    "detection": {"noise_psd_m2_per_hz": 1.5e-17},
    "controller": {"type": "velocity", "method": "delayed", "gamma_fb_hz": 20},
    "simulation": {"duration_s": 2, "seed": 3, "transient_s": 0.5, "record_stride": 4},
    "analysis": {"min_energy_samples": 10}
  })");
}

bool mentions(const ValidationError& e, const std::string& needle) {
  return std::any_of(e.problems().begin(), e.problems().end(),
                     [&](const std::string& p) { return p.find(needle) != std::string::npos; });
}

ValidationError parse_error(const Json& doc) {
  try {
    parse_run_config(doc);
  } catch (const ValidationError& e) {
    return e;
  }
  FAIL("expected a validation error");
  return ValidationError("unreachable");
}

SweepSpec small_sweep() {
  Json doc = Json::parse(R"({
    "name": "s",
    "replicates": 2,
    "master_seed": 99,
    "axes": [{"path": "controller.gamma_fb_hz", "values": [5, 50]}],
    "base": {
      "detection": {"noise_psd_m2_per_hz": 1.5e-17},
      "controller": {"type": "velocity", "method": "delayed", "gamma_fb_hz": 1},
      "simulation": {"duration_s": 2, "transient_s": 0.5, "record_stride": 4},
      "analysis": {"min_energy_samples": 10}
    }
  })");
  return parse_sweep_spec(doc);
}

}  // namespace

TEST_SUITE("harness-cli") {
  TEST_CASE("a velocity-damping document parses into SI units") {
    const RunConfig c = parse_run_config(velocity_doc());
    CHECK(c.name == "v");
    CHECK(c.controller == ControllerKind::velocity);
    CHECK(c.velocity.method == VelocityMethod::delayed);
    CHECK(c.velocity.gamma_fb == doctest::Approx(hz_to_rad(20.0)));
    CHECK(c.sim.seed == 3);
    CHECK(c.sim.record_stride == 4);
    CHECK(c.sim.dt == doctest::Approx(1.0 / (200.0 * 277.0)));
    CHECK(c.sim.duration() == doctest::Approx(2.0).epsilon(1e-4));
    CHECK(c.detection.noise_psd == 1.5e-17);
    CHECK(c.params.particle.radius == doctest::Approx(193.5e-9));
  }

  TEST_CASE("every problem in a document is reported at once") {
    Json doc = velocity_doc();
    doc["controller"]["gamma"] = 3;
    doc["simulation"]["duration_s"] = "long";
    doc["detection"]["noise_psd_m2_per_hz"] = -1.0;
    doc["extra"] = true;
    const ValidationError e = parse_error(doc);
    CHECK(e.problems().size() >= 4);
    CHECK(mentions(e, "controller.gamma"));
    CHECK(mentions(e, "duration_s"));
    CHECK(mentions(e, "noise_psd"));
    CHECK(mentions(e, "extra"));
  }

  TEST_CASE("a PLL needs exactly one way to set its loop bandwidth") {
    Json doc = velocity_doc();
    doc["controller"] = Json::parse(R"({"type": "pll", "zeta": 5, "modulation_depth": 0.01})");
    CHECK(mentions(parse_error(doc), "b3db_hz"));
    doc["controller"]["b3db_hz"] = 20;
    doc["controller"]["omega_n_hz"] = 2;
    CHECK(mentions(parse_error(doc), "omega_n_hz"));
    doc["controller"].erase("omega_n_hz");
    const RunConfig c = parse_run_config(doc);
    CHECK(c.pll.b3db() == doctest::Approx(hz_to_rad(20.0)));
  }

  TEST_CASE("modulation depth relative to its limit") {
    Json doc = velocity_doc();
    doc["controller"] = Json::parse(
        R"({"type": "pll", "zeta": 5, "b3db_hz": 27.7, "modulation_depth_over_glim": 0.5})");
    const RunConfig c = parse_run_config(doc);
    CHECK(c.pll.modulation_depth == doctest::Approx(0.5 * 2.0 * 27.7 / 277.0));
  }

  TEST_CASE("improved-model switches gate their settings") {
    Json doc = velocity_doc();
    doc["oscillator"] = Json::parse(R"({"offset_force_n": 1e-17, "drift": {"depth": 1e-3, "rate_hz": 0.5}})");
    doc["detection"]["spurious_modes"] = Json::parse(R"([{"frequency_hz": 482, "rms_amplitude_m": 1e-8}])");
    RunConfig off = parse_run_config(doc);
    CHECK_FALSE(off.improved.any());
    CHECK(off.effective_params().oscillator.offset_force == 0.0);
    CHECK_FALSE(off.effective_params().oscillator.drift.has_value());
    CHECK(off.effective_detection().spurious_modes.empty());

    doc["improved_model"] = Json::parse(R"({"offset_force": true, "spurious_modes": true, "freq_drift": true})");
    RunConfig on = parse_run_config(doc);
    CHECK(on.improved.any());
    CHECK(on.effective_params().oscillator.offset_force == 1e-17);
    CHECK(on.effective_params().oscillator.drift.has_value());
    CHECK(on.effective_detection().spurious_modes.size() == 1);
  }

  TEST_CASE("the modulation cap applies only when switched on") {
    Json doc = velocity_doc();
    doc["controller"] = Json::parse(
        R"({"type": "pll", "zeta": 5, "b3db_hz": 20, "modulation_depth": 0.04, "modulation_cap": 0.03})");
    CHECK_NOTHROW(parse_run_config(doc));
    doc["improved_model"] = Json::parse(R"({"modulation_cap": true})");
    CHECK_THROWS_AS(parse_run_config(doc), ValidationError);
  }

  TEST_CASE("dotted json paths") {
    Json doc = Json::object();
    set_json_path(doc, "controller.gamma_fb_hz", 5);
    set_json_path(doc, "a.b.c", "x");
    CHECK(doc["controller"]["gamma_fb_hz"] == 5);
    CHECK(get_json_path(doc, "a.b.c").value() == "x");
    CHECK_FALSE(get_json_path(doc, "a.z").has_value());
  }

  TEST_CASE("config hash is stable and sensitive") {
    const Json a = velocity_doc();
    Json b = a;
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    b["simulation"]["seed"] = 4;
    CHECK(config_hash(a) != config_hash(b));
  }

  TEST_CASE("files with comments load") {
    const auto path = std::filesystem::temp_directory_path() / "levcool_config_test.json";
    {
      std::ofstream f(path);
      f << "// velocity run\n" << velocity_doc().dump(2) << "\n";
    }
    CHECK(load_run_config(path).name == "v");
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_run_config(path), ValidationError);
  }

  TEST_CASE("the shipped example configurations are valid") {
    const std::filesystem::path dir = std::filesystem::path(LEVCOOL_PRESET_DIR).parent_path() / "configs";
    std::size_t seen = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      const Json doc = read_json_file(entry.path());
      if (doc.contains("axes")) {
        CHECK_NOTHROW(parse_sweep_spec(doc));
      } else {
        CHECK_NOTHROW(parse_run_config(doc));
      }
      ++seen;
    }
    CHECK(seen >= 5);
  }

  TEST_CASE("sweep points and seeds") {
    const SweepSpec s = small_sweep();
    CHECK(s.points() == 2);
    CHECK(s.point_values(1).at(0) == 50);
    CHECK(s.point_config(1, 0)["controller"]["gamma_fb_hz"] == 50);
    CHECK(s.seed_for(1, 1) == derive_seed(99, 3));
    std::set<std::uint64_t> seeds;
    for (std::size_t p = 0; p < 2; ++p) {
      for (std::size_t r = 0; r < 2; ++r) seeds.insert(s.seed_for(p, r));
    }
    CHECK(seeds.size() == 4);
  }

  TEST_CASE("a zipped sweep pairs its axes") {
    Json doc = Json::parse(R"({
      "mode": "zip",
      "axes": [{"path": "a", "values": [1, 2, 3]}, {"path": "b", "values": [4, 5, 6]}],
      "base": {}
    })");
    const SweepSpec s = parse_sweep_spec(doc);
    CHECK(s.points() == 3);
    doc["axes"][1]["values"] = Json::array({1, 2});
    CHECK_THROWS_AS(parse_sweep_spec(doc), ValidationError);
    doc["mode"] = "grid";
    CHECK(parse_sweep_spec(doc).points() == 6);
  }

  TEST_CASE("sweep results do not depend on the number of workers") {
    const SweepSpec s = small_sweep();
    const auto serial = run_sweep(s, 1);
    const auto parallel = run_sweep(s, 4);
    REQUIRE(serial.size() == 4);
    REQUIRE(parallel.size() == 4);
    for (std::size_t i = 0; i < serial.size(); ++i) {
      CHECK(serial[i].status == RunStatus::ok);
      CHECK(serial[i].point == i / 2);
      CHECK(serial[i].replicate == i % 2);
      CHECK(serial[i].seed == parallel[i].seed);
      CHECK(serial[i].summary.temperature.t_full == parallel[i].summary.temperature.t_full);
    }
    // More feedback, colder particle.
    CHECK(serial[2].summary.temperature.t_x < serial[0].summary.temperature.t_x);
  }

  TEST_CASE("a failing sweep point is recorded and the sweep continues") {
    SweepSpec s = small_sweep();
    s.axes[0].values = {Json(5), Json(-1)};
    s.replicates = 1;
    const auto rows = run_sweep(s, 2);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].status == RunStatus::ok);
    CHECK(rows[1].status == RunStatus::validation_error);
    CHECK_FALSE(rows[1].message.empty());
    std::ostringstream csv;
    write_sweep_csv(csv, s, rows);
    const std::string text = csv.str();
    CHECK(text.rfind("point,replicate,seed,controller.gamma_fb_hz,T_x,T_full", 0) == 0);
    CHECK(text.find("validation_error") != std::string::npos);
  }

  TEST_CASE("straight-line fit") {
    const auto f = fit_line({0.0, 1.0, 2.0, 3.0}, {1.0, 3.0, 5.0, 7.0});
    CHECK(f.slope == doctest::Approx(2.0));
    CHECK(f.intercept == doctest::Approx(1.0));
    CHECK_THROWS_AS(fit_line({1.0}, {1.0}), ValidationError);
    CHECK_THROWS_AS(fit_line({1.0, 1.0}, {1.0, 2.0}), ValidationError);
  }

  TEST_CASE("unknown figures are rejected") {
    ReproduceOptions opt;
    opt.out_dir = std::filesystem::temp_directory_path();
    CHECK_THROWS_AS(reproduce("fig9", opt), ValidationError);
    CHECK(figure_ids().size() == 6);
  }

  TEST_CASE("a single run writes its artifact set") {
    const auto dir = std::filesystem::temp_directory_path() / "levcool_run_single";
    std::filesystem::remove_all(dir);
    const RunConfig c = parse_run_config(velocity_doc());
    const RunSummary s = run_single(c, dir);
    CHECK(s.temperature.t_x > 0.0);
    for (const char* f : {"trace.csv", "spectrum_x.csv", "spectrum_measured.csv", "energy_hist.csv",
                          "summary.json", "manifest.json"}) {
      CHECK(std::filesystem::exists(dir / f));
    }
    std::ifstream trace(dir / "trace.csv");
    std::string header;
    std::getline(trace, header);
    CHECK(header == "t,x,v,x_measured,feedback");
    std::ifstream spec(dir / "spectrum_x.csv");
    std::getline(spec, header);
    CHECK(header == "freq_hz,psd_m2_per_hz");
    std::ifstream hist(dir / "energy_hist.csv");
    std::getline(hist, header);
    CHECK(header.rfind("E_joule,count,pdf", 0) == 0);
    std::filesystem::remove_all(dir);
  }
}
