#pragma once

#include <array>
#include <cmath>

namespace nvlock {

/// Ground-state constants of the NV spin model. Units are fixed project-wide:
/// frequencies in Hz, magnetic fields in nT, temperatures in K.
struct PhysicalConstants {
  double delta_hz = 2.87e9;        // zero-field splitting
  double beta_t_hz_per_k = -7.4e4; // temperature coefficient near 300 K
  double gamma_hz_per_nt = 28.0;   // gyromagnetic ratio (g_e mu_B / h folded in)

  bool valid() const {
    return delta_hz > 0.0 && gamma_hz_per_nt > 0.0 && beta_t_hz_per_k < 0.0;
  }
};

/// Laboratory-frame magnetic field, nT. The lab frame is identified with the
/// diamond cubic crystal frame.
struct LabField {
  double bx_nt = 0.0;
  double by_nt = 0.0;
  double bz_nt = 0.0;

  double norm() const { return std::sqrt(bx_nt * bx_nt + by_nt * by_nt + bz_nt * bz_nt); }

  LabField operator+(const LabField& o) const { return {bx_nt + o.bx_nt, by_nt + o.by_nt, bz_nt + o.bz_nt}; }
  LabField operator-(const LabField& o) const { return {bx_nt - o.bx_nt, by_nt - o.by_nt, bz_nt - o.bz_nt}; }
  LabField operator*(double s) const { return {bx_nt * s, by_nt * s, bz_nt * s}; }
};

/// Temperature offset from 300 K.
struct TemperatureOffset {
  double dt_k = 0.0;
};

// Field magnitude validity bound (level anti-crossing physics is not modeled
// above this), and linear beta_T validity.
inline constexpr double kFieldBoundNt = 2e7;   // 20 mT
inline constexpr double kTempBoundK = 50.0;

// Microwave synthesizer band used for integrator clamping.
inline constexpr double kBandLoHz = 2.5e9;
inline constexpr double kBandHiHz = 3.5e9;

/// The four tetrahedral NV axes, unit vectors in the cubic frame.
/// n0..n3 = (1,1,1), (1,-1,-1), (-1,1,-1), (-1,-1,1), each /sqrt(3).
struct NvOrientationSet {
  std::array<std::array<double, 3>, 4> axes;

  static NvOrientationSet standard() {
    const double s = 1.0 / std::sqrt(3.0);
    return {{{{{s, s, s}}, {{s, -s, -s}}, {{-s, s, -s}}, {{-s, -s, s}}}}};
  }
};

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace nvlock
