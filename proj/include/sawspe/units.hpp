#pragma once

#include <cmath>

// Internal unit system: frequency in Hz, photon energy in meV, time in ps,
// power in mW. Conversions happen only at I/O boundaries.
namespace sawspe::units {

/// hc in meV·nm.
inline constexpr double kHcMevNm = 1.23984193e6;
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kPsPerSecond = 1e12;

inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }
inline double mw_to_dbm(double mw) { return 10.0 * std::log10(mw); }

/// Photon energy (meV) of a vacuum wavelength (nm). The map is its own inverse.
inline double nm_to_mev(double nm) { return kHcMevNm / nm; }
inline double mev_to_nm(double mev) { return kHcMevNm / mev; }

/// Period in ps of a drive at `hz`.
inline double period_ps(double hz) { return kPsPerSecond / hz; }

}  // namespace sawspe::units
