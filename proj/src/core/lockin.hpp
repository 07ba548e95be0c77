#pragma once

#include <span>
#include <utility>
#include <vector>

#include "odmr_signal.hpp"

namespace nvlock {

struct LockInConfig {
  double f_ref_hz = 1.8240e3;
  double phase_rad = kPi;  // sign convention: in-phase > 0 below resonance
  double alpha = 0.0;      // single-pole IIR coefficient; 0 selects the default
  double sample_rate_hz = 1e6;

  /// Default per the filter-corner convention: corner ~ f_ref / 10.
  static double default_alpha(double f_ref_hz, double sample_rate_hz) {
    return 2.0 * kPi * (f_ref_hz / 10.0) / sample_rate_hz;
  }

  double alpha_or_default() const {
    return alpha > 0.0 ? alpha : default_alpha(f_ref_hz, sample_rate_hz);
  }

  bool valid() const {
    const double a = alpha_or_default();
    return a > 0.0 && a <= 1.0 && f_ref_hz < sample_rate_hz / 2.0;
  }
};

struct LockInState {
  double in_phase_v = 0.0;
  double quadrature_v = 0.0;
  std::uint64_t sample_index = 0;
};

struct IQ {
  double in_phase_v = 0.0;
  double quadrature_v = 0.0;
};

/// One demodulation step: mix with 2 cos / 2 sin at f_ref, then the single-pole
/// filter y_k = (1 - alpha) y_{k-1} + alpha x_k (transfer alpha z / (z + alpha - 1)).
IQ demodulate_step(LockInState& state, double sample_v, const LockInConfig& cfg);

/// Static plant gain 2 C V0 f_dev / sigma^2 (V/Hz). The flag warns when f_dev
/// exceeds sigma and the linearization is outside its validity range.
struct GainResult {
  double gain_v_per_hz = 0.0;
  bool validity_warning = false;
};
GainResult small_signal_gain(const LineShapeParams& shape, double f_dev_hz);

/// Effective filter coefficient of the per-sample IIR observed at a decimated
/// cadence of n samples per update.
double effective_alpha(double alpha_sample, std::uint64_t samples_per_update);

struct SpectrumPoint {
  double f_lo_hz = 0.0;
  double in_phase_v = 0.0;
  double quadrature_v = 0.0;
};

/// Settled in-phase/quadrature output vs swept f_LO on a noiseless stream over
/// the given line centers. Zero crossings of the in-phase trace mark centers.
std::vector<SpectrumPoint> lockin_spectrum(const LockInConfig& cfg, const ModulationParams& mod,
                                           const LineShapeParams& shape,
                                           std::span<const double> line_centers_hz,
                                           double f_start_hz, double f_stop_hz, double step_hz);

/// Picks the demodulation phase maximizing the in-phase slope at a known
/// resonance, from one I/Q settling run at a small negative detuning.
double calibrate_phase(const LockInConfig& cfg, const ModulationParams& mod,
                       const LineShapeParams& shape, double line_center_hz);

}  // namespace nvlock
