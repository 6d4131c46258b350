#pragma once

#include <complex>

// Unit system used throughout: time in picoseconds, length in nanometers,
// angular frequencies and rates in rad/ps.  A wavelength of 945 nm then
// corresponds to an angular frequency of roughly 1993.35 rad/ps.
namespace purimode {

using cplx = std::complex<double>;

inline constexpr double speed_of_light_nm_per_ps = 299792.458;
inline constexpr double pi = 3.14159265358979323846;

inline constexpr cplx iu{0.0, 1.0};

// angular frequency (rad/ps) of light with the given vacuum wavelength (nm)
inline double omega_from_wavelength_nm(double lambda_nm) {
  return 2.0 * pi * speed_of_light_nm_per_ps / lambda_nm;
}

}  // namespace purimode
