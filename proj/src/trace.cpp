#include "levcool/trace.hpp"

#include <algorithm>
#include <ostream>

#include <fmt/format.h>

namespace levcool {
namespace {

TraceView make_view(const SimTrace& trace, std::size_t first) {
  first = std::min(first, trace.size());
  auto tail = [first](const std::vector<double>& col) {
    return std::span<const double>(col).subspan(std::min(first, col.size()));
  };
  TraceView view;
  view.dt = trace.dt;
  view.t = tail(trace.t);
  view.x = tail(trace.x);
  view.v = tail(trace.v);
  view.x_measured = tail(trace.x_measured);
  view.feedback = tail(trace.feedback);
  view.probe_names = trace.probe_names;
  for (const auto& p : trace.probes) view.probes.push_back(tail(p));
  return view;
}

}  // namespace

std::span<const double> TraceView::probe(std::string_view name) const {
  for (std::size_t i = 0; i < probe_names.size(); ++i) {
    if (probe_names[i] == name) return probes[i];
  }
  return {};
}

TraceView SimTrace::analysis() const { return make_view(*this, transient_rows); }

TraceView SimTrace::raw() const { return make_view(*this, 0); }

void write_trace_csv(std::ostream& out, const TraceView& view, bool include_probes) {
  out << "t,x,v,x_measured,feedback";
  if (include_probes) {
    for (const auto& name : view.probe_names) out << ',' << name;
  }
  out << '\n';
  for (std::size_t i = 0; i < view.size(); ++i) {
    out << fmt::format("{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}", view.t[i], view.x[i], view.v[i],
                       view.x_measured[i], view.feedback[i]);
    if (include_probes) {
      for (const auto& p : view.probes) out << fmt::format(",{:.9g}", p[i]);
    }
    out << '\n';
  }
}

}  // namespace levcool
