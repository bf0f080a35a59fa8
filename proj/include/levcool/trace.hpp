#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace levcool {

/// Read-only window onto a trace (typically with the transient removed).
struct TraceView {
  double dt = 0.0;  // spacing of the rows in this view
  std::span<const double> t;
  std::span<const double> x;           // true position, m
  std::span<const double> v;           // true full-step velocity, m/s
  std::span<const double> x_measured;  // detector output, m
  std::span<const double> feedback;    // controller signal
  std::vector<std::string> probe_names;
  std::vector<std::span<const double>> probes;

  std::size_t size() const noexcept { return t.size(); }
  bool empty() const noexcept { return t.empty(); }
  double sample_rate() const noexcept { return 1.0 / dt; }
  /// Empty span when the probe does not exist.
  std::span<const double> probe(std::string_view name) const;
};

/// Time series recorded by a run. `v` is the full-step velocity, the mean of
/// the two neighbouring half-step leapfrog values.
struct SimTrace {
  double dt = 0.0;  // row spacing = step * record_stride
  std::size_t transient_rows = 0;
  std::vector<double> t;
  std::vector<double> x;
  std::vector<double> v;
  std::vector<double> x_measured;  // detector output averaged over each record interval
  std::vector<double> feedback;
  std::vector<std::string> probe_names;
  std::vector<std::vector<double>> probes;

  std::size_t size() const noexcept { return t.size(); }
  bool empty() const noexcept { return t.empty(); }

  /// Rows after the transient.
  TraceView analysis() const;
  /// All rows, transient included.
  TraceView raw() const;
};

/// CSV with header `t,x,v,x_measured,feedback[,probe...]`, SI units.
void write_trace_csv(std::ostream& out, const TraceView& view, bool include_probes = false);

}  // namespace levcool
