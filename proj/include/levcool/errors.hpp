#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace levcool {

/// Raised when inputs fail validation. Carries every offending field, not
/// just the first one found.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(std::vector<std::string> problems);
  explicit ValidationError(const std::string& problem)
      : ValidationError(std::vector<std::string>{problem}) {}

  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Raised when a run cannot continue: non-finite state or a controller
/// throwing mid-run. `step()` is the index of the failing step.
class SimulationFault : public std::runtime_error {
 public:
  SimulationFault(std::uint64_t step, const std::string& what);

  std::uint64_t step() const noexcept { return step_; }

 private:
  std::uint64_t step_;
};

/// Accumulates validation problems and throws them together.
class ProblemList {
 public:
  void require(bool ok, const std::string& problem) {
    if (!ok) problems_.push_back(problem);
  }
  void add(const std::string& problem) { problems_.push_back(problem); }
  void merge(const ValidationError& e) {
    problems_.insert(problems_.end(), e.problems().begin(), e.problems().end());
  }
  bool empty() const noexcept { return problems_.empty(); }
  void throw_if_any() const {
    if (!problems_.empty()) throw ValidationError(problems_);
  }

 private:
  std::vector<std::string> problems_;
};

}  // namespace levcool
