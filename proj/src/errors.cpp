#include "levcool/errors.hpp"

#include <sstream>

namespace levcool {
namespace {

std::string join(const std::vector<std::string>& problems) {
  std::ostringstream out;
  out << "invalid configuration";
  for (const auto& p : problems) out << "\n  - " << p;
  return out.str();
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> problems)
    : std::invalid_argument(join(problems)), problems_(std::move(problems)) {}

SimulationFault::SimulationFault(std::uint64_t step, const std::string& what)
    : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}

}  // namespace levcool
