#pragma once

#include <array>
#include <stdexcept>
#include <utility>

#include "constants.hpp"

namespace nvlock {

/// Pair of m_s = 0 -> -1 / 0 -> +1 transition frequencies, Hz.
struct TransitionPair {
  double f_minus_hz = 0.0;
  double f_plus_hz = 0.0;
};

/// Eight resonance centers (four orientation classes, two branches) plus the
/// configured hyperfine splitting.
struct TransitionSet {
  std::array<TransitionPair, 4> classes;
  double hyperfine_hz = kDefaultHyperfineHz;

  static constexpr double kDefaultHyperfineHz = 2.16e6;  // 14N

  /// Line center for (class, branch, m_I); m_i in {-1, 0, +1}.
  double line_hz(int cls, bool plus_branch, int m_i) const {
    const TransitionPair& p = classes.at(static_cast<std::size_t>(cls));
    return (plus_branch ? p.f_plus_hz : p.f_minus_hz) + m_i * hyperfine_hz;
  }
};

enum class SpinModel { kLinear, kFull };

/// Signed projection of a lab-frame field onto tetrahedral axis i.
double project_field(const LabField& b, int axis_index);

/// Linear transition model: f_pm = delta + beta_T * dt +- gamma * b_nv.
TransitionPair transitions_linear(double b_nv_nt, TemperatureOffset dt,
                                  const PhysicalConstants& c = {});

/// Full ground-state model: diagonalizes H/h = D' Sz^2 + gamma (Bz' Sz + Bx' Sx)
/// in the axis frame (azimuthal symmetry puts the transverse component on x).
/// f_minus = middle - lowest eigenvalue, f_plus = highest - lowest.
TransitionPair transitions_full(const LabField& b, int axis_index, TemperatureOffset dt,
                                const PhysicalConstants& c = {});

/// Eigenvalues of the axis-frame Hamiltonian, ascending, Hz. Exposed for the
/// trace-conservation invariant.
std::array<double, 3> hamiltonian_eigenvalues(double d_eff_hz, double axial_nt,
                                              double transverse_nt,
                                              const PhysicalConstants& c = {});

/// Three hyperfine line centers {f - A, f, f + A}.
std::array<double, 3> hyperfine_lines(double f_center_hz, double splitting_hz);

/// All eight resonance centers for the selected model.
TransitionSet all_class_frequencies(const LabField& b, TemperatureOffset dt, SpinModel model,
                                    const PhysicalConstants& c = {},
                                    double hyperfine_hz = TransitionSet::kDefaultHyperfineHz);

}  // namespace nvlock
