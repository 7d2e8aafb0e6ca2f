// units.hpp — unit conventions and physical constants
//
// Everything inside the library is in angular units (rad/s). External
// interfaces (configs, CSV, JSON) carry ordinary frequency in Hz and convert
// exactly once at the boundary with the helpers below.

#pragma once

namespace omcool {

inline constexpr double pi = 3.141592653589793238462643383279502884;
inline constexpr double two_pi = 2.0 * pi;

// CODATA 2018 exact values
inline constexpr double k_boltzmann = 1.380649e-23;   // J/K
inline constexpr double hbar = 1.054571817e-34;       // J s

constexpr double hz_to_rad(double f_hz) { return two_pi * f_hz; }
constexpr double rad_to_hz(double w_rad) { return w_rad / two_pi; }

} // namespace omcool
