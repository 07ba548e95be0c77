#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "constants.hpp"
#include "spin_model.hpp"
#include "world.hpp"

namespace nvlock {

/// Lorentzian dip parameters shared by all hyperfine lines.
struct LineShapeParams {
  double v0_v = 1.0;        // off-resonance fluorescence level
  double contrast = 0.01;   // fractional dip depth per line
  double sigma_hz = 5e5;    // HWHM

  bool valid() const { return v0_v > 0.0 && contrast > 0.0 && contrast < 1.0 && sigma_hz > 0.0; }
};

struct ModulationParams {
  double f_lo_hz = 2.87e9;
  double f_dev_hz = 3.2e5;
  double f_ref_hz = 1.8240e3;
};

// NV response bandwidth bound; sensitivity degrades above this so configs
// with larger f_ref are rejected.
inline constexpr double kMaxRefHz = 2e4;

struct NoiseParams {
  double white_v_per_sqrt_hz = 0.0;
  double rin_per_sqrt_hz = 0.0;      // common-mode, multiplicative
  double drift_amplitude = 0.0;      // fractional, slow sinusoidal laser drift
  double drift_period_s = 10.0;
  std::uint64_t rng_seed = 1;
};

struct SimClock {
  double sample_rate_hz = 1e6;
};

/// Instantaneous FM drive frequency f_LO + f_dev cos(2 pi f_ref t).
double fm_frequency(double t_s, const ModulationParams& m);

/// Sum of Lorentzian dip fractions at frequency f over the given line centers.
double dip_sum(double f_hz, const LineShapeParams& shape, std::span<const double> centers_hz);

/// Fluorescence level v0 (1 - dip_sum).
double odmr_response(double f_hz, const LineShapeParams& shape, std::span<const double> centers_hz);

/// Per-sample photodetector model over a shared clock. Drive frequencies are
/// supplied per channel each tick so the lock loop can steer f_LO; the
/// convenience synthesize_samples below covers the fixed-modulation case.
class StreamSynthesizer {
 public:
  StreamSynthesizer(const WorldTimeline& world, SpinModel model, const PhysicalConstants& consts,
                    double hyperfine_hz, LineShapeParams shape, NoiseParams noise, SimClock clock,
                    bool balanced);

  /// Detector voltage for the current tick; advances time and the RNG.
  double next(std::span<const double> drive_freqs_hz);

  double time_s() const { return static_cast<double>(tick_) / clock_.sample_rate_hz; }
  double sample_rate_hz() const { return clock_.sample_rate_hz; }

 private:
  void refresh_lines(const WorldState& w);

  const WorldTimeline& world_;
  SpinModel model_;
  PhysicalConstants consts_;
  double hyperfine_hz_;
  LineShapeParams shape_;
  NoiseParams noise_;
  SimClock clock_;
  bool balanced_;
  std::uint64_t tick_ = 0;
  std::mt19937_64 rng_;
  std::normal_distribution<double> gauss_{0.0, 1.0};
  double white_sd_ = 0.0;
  double rin_sd_ = 0.0;
  WorldState cached_world_{};
  bool have_world_ = false;
  std::vector<double> line_centers_;  // 24 entries
};

/// Fixed-drive sample stream for the given duration. Channel f_ref values must
/// be pairwise distinct when more than one channel is present.
std::vector<double> synthesize_samples(double duration_s, std::span<const ModulationParams> channels,
                                       const WorldTimeline& world, SpinModel model,
                                       const PhysicalConstants& consts, double hyperfine_hz,
                                       const LineShapeParams& shape, const NoiseParams& noise,
                                       SimClock clock, bool balanced);

/// Raw dump: little-endian float64 samples plus a sidecar text header.
void dump_stream(const std::string& path_base, std::span<const double> samples,
                 double sample_rate_hz, std::uint64_t seed);

}  // namespace nvlock
