#include "lockin.hpp"

#include <cmath>
#include <stdexcept>

namespace nvlock {

IQ demodulate_step(LockInState& state, double sample_v, const LockInConfig& cfg) {
  const double a = cfg.alpha_or_default();
  const double t = static_cast<double>(state.sample_index) / cfg.sample_rate_hz;
  const double ph = 2.0 * kPi * cfg.f_ref_hz * t + cfg.phase_rad;
  const double xi = sample_v * 2.0 * std::cos(ph);
  const double xq = sample_v * 2.0 * std::sin(ph);
  state.in_phase_v = (1.0 - a) * state.in_phase_v + a * xi;
  state.quadrature_v = (1.0 - a) * state.quadrature_v + a * xq;
  ++state.sample_index;
  return {state.in_phase_v, state.quadrature_v};
}

GainResult small_signal_gain(const LineShapeParams& shape, double f_dev_hz) {
  GainResult r;
  r.gain_v_per_hz = 2.0 * shape.contrast * shape.v0_v * f_dev_hz / (shape.sigma_hz * shape.sigma_hz);
  r.validity_warning = f_dev_hz > shape.sigma_hz;
  return r;
}

double effective_alpha(double alpha_sample, std::uint64_t samples_per_update) {
  return 1.0 - std::pow(1.0 - alpha_sample, static_cast<double>(samples_per_update));
}

namespace {

// Settle the demodulator on a noiseless stream at fixed f_LO, then average
// I/Q over one reference period to strip residual harmonic ripple.
IQ settled_iq(const LockInConfig& cfg, const ModulationParams& mod, const LineShapeParams& shape,
              std::span<const double> centers) {
  const double a = cfg.alpha_or_default();
  const double fs = cfg.sample_rate_hz;
  const auto period = static_cast<std::uint64_t>(std::llround(fs / cfg.f_ref_hz));
  const auto n_settle = static_cast<std::uint64_t>(std::ceil(10.0 / a));
  const double scale = shape.v0_v * shape.contrast;

  LockInState st;
  IQ iq;
  auto run = [&](std::uint64_t n) {
    for (std::uint64_t k = 0; k < n; ++k) {
      const double t = static_cast<double>(st.sample_index) / fs;
      iq = demodulate_step(st, odmr_response(fm_frequency(t, mod), shape, centers), cfg);
    }
  };
  run(n_settle);
  // design: settle 10/(alpha fs) seconds or change < 1e-4 of peak, whichever later
  double prev = iq.in_phase_v;
  for (int block = 0; block < 40; ++block) {
    run(period);
    if (std::abs(iq.in_phase_v - prev) < 1e-4 * scale) break;
    prev = iq.in_phase_v;
  }
  IQ mean;
  for (std::uint64_t k = 0; k < period; ++k) {
    const double t = static_cast<double>(st.sample_index) / fs;
    iq = demodulate_step(st, odmr_response(fm_frequency(t, mod), shape, centers), cfg);
    mean.in_phase_v += iq.in_phase_v;
    mean.quadrature_v += iq.quadrature_v;
  }
  mean.in_phase_v /= static_cast<double>(period);
  mean.quadrature_v /= static_cast<double>(period);
  return mean;
}

}  // namespace

std::vector<SpectrumPoint> lockin_spectrum(const LockInConfig& cfg, const ModulationParams& mod,
                                           const LineShapeParams& shape,
                                           std::span<const double> line_centers_hz,
                                           double f_start_hz, double f_stop_hz, double step_hz) {
  if (!cfg.valid()) throw std::invalid_argument("invalid lock-in config");
  if (step_hz <= 0.0 || f_stop_hz <= f_start_hz) throw std::invalid_argument("bad sweep range");
  std::vector<SpectrumPoint> out;
  ModulationParams m = mod;
  m.f_ref_hz = cfg.f_ref_hz;
  for (double f = f_start_hz; f <= f_stop_hz; f += step_hz) {
    m.f_lo_hz = f;
    const IQ iq = settled_iq(cfg, m, shape, line_centers_hz);
    out.push_back({f, iq.in_phase_v, iq.quadrature_v});
  }
  return out;
}

double calibrate_phase(const LockInConfig& cfg, const ModulationParams& mod,
                       const LineShapeParams& shape, double line_center_hz) {
  // Measure the settled response at a small negative detuning with phase 0;
  // the phase that rotates it onto the positive in-phase axis maximizes the
  // slope with the project sign convention.
  LockInConfig probe = cfg;
  probe.phase_rad = 0.0;
  ModulationParams m = mod;
  m.f_ref_hz = cfg.f_ref_hz;
  m.f_lo_hz = line_center_hz - shape.sigma_hz / 20.0;
  const double centers[] = {line_center_hz};
  const IQ iq = settled_iq(probe, m, shape, centers);
  return std::atan2(-iq.quadrature_v, iq.in_phase_v);
}

}  // namespace nvlock
