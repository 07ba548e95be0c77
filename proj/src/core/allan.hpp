#pragma once

#include <span>
#include <vector>

namespace nvlock {

struct AllanPoint {
  double tau_s = 0.0;
  double adev = 0.0;
};

/// Overlapping Allan deviation of an evenly sampled series (sample period
/// tau0_s) at logarithmically spaced averaging times.
std::vector<AllanPoint> allan_deviation(std::span<const double> series, double tau0_s,
                                        int points_per_decade = 8);

struct AsdPoint {
  double freq_hz = 0.0;
  double asd = 0.0;  // units of input / sqrt(Hz)
};

/// Amplitude spectral density via averaged periodograms (Hann window,
/// 50% overlap).
std::vector<AsdPoint> amplitude_spectral_density(std::span<const double> series, double sample_rate_hz,
                                                 std::size_t segment_length = 4096);

/// Least-squares slope of log10(y) vs log10(x) restricted to x in [x_lo, x_hi].
double loglog_slope(std::span<const double> x, std::span<const double> y, double x_lo, double x_hi);

/// Coefficient a of the fit y = a * x^slope_fixed over [x_lo, x_hi] (log-space mean).
double loglog_coefficient(std::span<const double> x, std::span<const double> y, double slope_fixed,
                          double x_lo, double x_hi);

}  // namespace nvlock
