#pragma once

#include <numbers>

// Everything inside the library is strict SI. Conversions happen at the
// config / CLI boundary only.
namespace levcool {

inline constexpr double kBoltzmann = 1.380649e-23;  // J/K, exact
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kElementaryCharge = 1.602176634e-19;  // C

inline constexpr double kPascalPerMbar = 100.0;

constexpr double hz_to_rad(double hz) { return kTwoPi * hz; }
constexpr double rad_to_hz(double rad) { return rad / kTwoPi; }
constexpr double mbar_to_pa(double mbar) { return mbar * kPascalPerMbar; }
constexpr double pa_to_mbar(double pa) { return pa / kPascalPerMbar; }
constexpr double nm_to_m(double nm) { return nm * 1e-9; }

}  // namespace levcool
