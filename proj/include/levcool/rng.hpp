#pragma once

#include <cstdint>
#include <random>

#include <boost/random/normal_distribution.hpp>

namespace levcool {

using Rng = std::mt19937_64;

/// Independent sub-streams of one run. Each is seeded from (seed, stream id)
/// so turning detection noise on or off leaves the thermal sequence alone.
enum class Stream : std::uint64_t {
  thermal = 1,
  detection = 2,
  initial_state = 3,
  controller = 4,
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seed of replicate/point `index` of a sweep driven by `master`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept;

Rng make_stream(std::uint64_t seed, Stream stream);

/// Standard normal sampler (ziggurat).
class Gaussian {
 public:
  double operator()(Rng& rng) { return dist_(rng); }

 private:
  boost::random::normal_distribution<double> dist_{0.0, 1.0};
};

}  // namespace levcool
