#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>

#include <span>
#include <string>
#include <vector>

#include "levcool/analysis.hpp"
#include "levcool/config.hpp"
#include "levcool/errors.hpp"
#include "levcool/harness.hpp"
#include "levcool/theory.hpp"
#include "levcool/units.hpp"

namespace py = pybind11;
using namespace levcool;

namespace {

py::array_t<double> to_array(std::span<const double> s) {
  return py::array_t<double>(static_cast<py::ssize_t>(s.size()), s.data());
}

py::dict run_config_json(const std::string& text, bool keep_trace) {
  const RunConfig cfg = parse_run_config(Json::parse(text));
  RunResult r;
  {
    py::gil_scoped_release release;
    r = simulate(cfg, {true, keep_trace});
  }
  py::dict out;
  out["summary"] = to_json(r.summary).dump();
  if (keep_trace) {
    const TraceView v = r.trace.analysis();
    py::dict trace;
    trace["t"] = to_array(v.t);
    trace["x"] = to_array(v.x);
    trace["v"] = to_array(v.v);
    trace["x_measured"] = to_array(v.x_measured);
    trace["feedback"] = to_array(v.feedback);
    out["trace"] = trace;
  }
  out["freq_hz"] = to_array(r.spectrum_x.freqs);
  out["psd_x"] = to_array(r.spectrum_x.psd);
  out["psd_measured"] = to_array(r.spectrum_measured.psd);
  return out;
}

theory::TheoryInputs inputs_from_json(const std::string& text) {
  if (text.empty()) return theory::reference_inputs();
  return theory_inputs(parse_run_config(Json::parse(text)));
}

}  // namespace

PYBIND11_MODULE(_levcool, m) {
  m.doc() = "Feedback-cooling simulator core";
  m.attr("__version__") = LEVCOOL_VERSION;

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<SimulationFault>(m, "SimulationFault", PyExc_RuntimeError);

  m.def("run_json", &run_config_json, py::arg("config"), py::arg("keep_trace") = true,
        "Simulate a JSON run config; returns the summary as JSON text plus arrays.");

  m.def(
      "welch_psd",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> series, double sample_rate,
         std::size_t segment_length) {
        SegmentConfig seg;
        seg.length = segment_length;
        const Spectrum s = welch_psd(std::span<const double>(series.data(), series.size()),
                                     sample_rate, seg);
        return py::make_tuple(to_array(s.freqs), to_array(s.psd));
      },
      py::arg("series"), py::arg("sample_rate"), py::arg("segment_length") = 0,
      "One-sided Welch PSD; returns (freqs_hz, psd).");

  m.def(
      "vd_temperature",
      [](double gamma_fb_hz, const std::string& config) {
        auto in = inputs_from_json(config);
        in.gamma_fb = hz_to_rad(gamma_fb_hz);
        return theory::vd_temperature(in);
      },
      py::arg("gamma_fb_hz"), py::arg("config") = "");

  m.def(
      "vd_optimum",
      [](const std::string& config) {
        const auto o = theory::vd_optimum(inputs_from_json(config));
        return py::make_tuple(rad_to_hz(o.gamma_fb), o.t_min);
      },
      py::arg("config") = "", "(gamma_fb_hz, T_min) of the velocity-damping optimum.");

  m.def(
      "pll_limits",
      [](double b3db_hz, const std::string& config) {
        const auto l = theory::pll_limits_at_bandwidth(inputs_from_json(config), hz_to_rad(b3db_hz));
        py::dict d;
        d["t_lim1"] = l.t_lim1;
        d["t_lim2"] = l.t_lim2;
        d["g_lim"] = l.g_lim;
        d["b_l_hz"] = l.b_l_hz;
        return d;
      },
      py::arg("b3db_hz"), py::arg("config") = "");

  m.def(
      "pll_optimum",
      [](const std::string& config) {
        const auto o = theory::pll_optimum(inputs_from_json(config));
        return py::make_tuple(rad_to_hz(o.b3db), o.t_min);
      },
      py::arg("config") = "", "(b3db_hz, T_min) where the PLL bounds meet.");
}
